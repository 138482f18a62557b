//! Interpreter, supercompiler and finite-countermodel verifier for a strict
//! rewriting language over sequence data.

pub mod program;
pub mod syntax;
pub mod term;
pub mod interp;
pub mod matcher;
pub mod fol;
pub mod finder;
pub mod oracle;
pub mod scp;
