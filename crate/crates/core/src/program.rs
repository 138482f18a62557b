//! Programs: an initial term plus an ordered list of rewriting rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::term::{vars, Term};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    /// Position in the rule list, starting at 1.
    pub index: usize,
    /// Always a `Term::Call` whose arguments are passive.
    pub lhs: Term,
    pub rhs: Term,
}

impl Rule {
    pub fn function(&self) -> &str {
        match &self.lhs {
            Term::Call(f, _) => f,
            _ => unreachable!("rule lhs is a call"),
        }
    }

    pub fn patterns(&self) -> &[Term] {
        match &self.lhs {
            Term::Call(_, args) => args,
            _ => unreachable!("rule lhs is a call"),
        }
    }

    pub fn arity(&self) -> usize {
        self.patterns().len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub initial: Term,
    pub rules: Vec<Rule>,
    pub alphabet: BTreeSet<char>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("arity mismatch for {function}: expected {expected}, found {found}")]
    ArityMismatch { function: String, expected: usize, found: usize },
    #[error("rule {rule}: variable {var} of the right-hand side does not occur on the left")]
    FreeRhsVariable { rule: usize, var: String },
    #[error("rule {rule}: left-hand side argument is not passive")]
    ActivePattern { rule: usize },
    #[error("call of undefined function {0}")]
    UndefinedFunction(String),
}

impl Program {
    /// Builds a program and checks the structural invariants.
    pub fn new(initial: Term, rules: Vec<(Term, Term)>, declared: BTreeSet<char>) -> Result<Self, ProgramError> {
        let rules: Vec<Rule> = rules
            .into_iter()
            .enumerate()
            .map(|(i, (lhs, rhs))| Rule { index: i + 1, lhs, rhs })
            .collect();
        let mut alphabet = declared;
        initial.chars(&mut alphabet);
        for r in &rules {
            r.lhs.chars(&mut alphabet);
            r.rhs.chars(&mut alphabet);
        }
        let p = Program { initial, rules, alphabet };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let mut arity: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &self.rules {
            let Term::Call(f, args) = &r.lhs else {
                return Err(ProgramError::ActivePattern { rule: r.index });
            };
            if !args.iter().all(Term::is_passive) {
                return Err(ProgramError::ActivePattern { rule: r.index });
            }
            match arity.get(f.as_str()) {
                Some(&k) if k != args.len() => {
                    return Err(ProgramError::ArityMismatch { function: f.clone(), expected: k, found: args.len() })
                }
                _ => {
                    arity.insert(f, args.len());
                }
            }
            let lv = vars(&r.lhs);
            if let Some(v) = vars(&r.rhs).order.into_iter().find(|v| !lv.contains(v)) {
                return Err(ProgramError::FreeRhsVariable { rule: r.index, var: v.to_string() });
            }
        }
        let mut calls = Vec::new();
        self.initial.calls(&mut calls);
        for r in &self.rules {
            r.rhs.calls(&mut calls);
        }
        for (f, k) in calls {
            match arity.get(f.as_str()) {
                None => return Err(ProgramError::UndefinedFunction(f)),
                Some(&e) if e != k => {
                    return Err(ProgramError::ArityMismatch { function: f, expected: e, found: k })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Rules defining `f`, in program order.
    pub fn rules_for<'a>(&'a self, f: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.function() == f)
    }

    /// Function names in order of first definition.
    pub fn functions(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for r in &self.rules {
            if !out.iter().any(|(f, _)| f == r.function()) {
                out.push((r.function().to_string(), r.arity()));
            }
        }
        out
    }

    pub fn arity_of(&self, f: &str) -> Option<usize> {
        self.rules_for(f).next().map(Rule::arity)
    }
}
