//! Concrete syntax of `.l` program files.
//!
//! ```text
//! // comment
//! alphabet: 'a' 'b';
//! start: Fib(e.n);
//! Fib(e.n) = F(e.n, 'b', 'a');
//! F(ε, e.xs, e.ys) = (e.xs):(e.ys);
//! ```
//!
//! Concatenation is `:` (juxtaposition is accepted too), parentheses are the
//! unary data constructor, `'aba'` is sugar for `'a':'b':'a'`, and `ε` (or
//! `''`) is the empty sequence.

use std::collections::BTreeSet;

use crate::program::{Program, ProgramError};
use crate::term::{Term, Var, VarKind};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Var(VarKind, String),
    LParen,
    RParen,
    Colon,
    Comma,
    Semi,
    Eq,
    Eps,
    End,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    col: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ProgramError {
    ProgramError::Syntax { line, column, message: message.into() }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { chars: src.char_indices().peekable(), src, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ProgramError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '/' && self.peek2() == Some('/') {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::End, line, col));
                return Ok(out);
            };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ':' => {
                    self.bump();
                    Tok::Colon
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                '=' => {
                    self.bump();
                    Tok::Eq
                }
                'ε' => {
                    self.bump();
                    Tok::Eps
                }
                '\'' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            None => return Err(err(line, col, "unterminated character literal")),
                            Some('\'') => break,
                            Some('\\') => match self.bump() {
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some(c) => s.push(c),
                                None => return Err(err(line, col, "unterminated escape")),
                            },
                            Some(c) => s.push(c),
                        }
                    }
                    Tok::Str(s)
                }
                c if is_ident_char(c) => {
                    let start = self.chars.peek().unwrap().0;
                    let mut end = start;
                    while let Some(&(i, c)) = self.chars.peek() {
                        if is_ident_char(c) {
                            end = i + c.len_utf8();
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let word = &self.src[start..end];
                    let kind = match word {
                        "e" => Some(VarKind::E),
                        "s" => Some(VarKind::S),
                        "t" => Some(VarKind::T),
                        _ => None,
                    };
                    match kind {
                        Some(kind) if self.peek() == Some('.') => {
                            self.bump();
                            let mut name = String::new();
                            while let Some(c) = self.peek() {
                                if is_ident_char(c) {
                                    name.push(c);
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                            if name.is_empty() {
                                return Err(err(line, col, "empty variable name"));
                            }
                            Tok::Var(kind, name)
                        }
                        _ => Tok::Ident(word.to_string()),
                    }
                }
                other => return Err(err(line, col, format!("unexpected character {other:?}"))),
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn here(&self) -> (usize, usize) {
        let (_, l, c) = &self.toks[self.pos];
        (*l, *c)
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ProgramError> {
        if *self.peek() == t {
            self.next();
            Ok(())
        } else {
            let (l, c) = self.here();
            Err(err(l, c, format!("expected {what}, found {:?}", self.peek())))
        }
    }

    fn starts_factor(&self) -> bool {
        matches!(self.peek(), Tok::Str(_) | Tok::Var(..) | Tok::LParen | Tok::Eps | Tok::Ident(_))
    }

    fn term(&mut self) -> Result<Term, ProgramError> {
        let mut parts = Vec::new();
        if !self.starts_factor() {
            return Ok(Term::Empty);
        }
        parts.push(self.factor()?);
        loop {
            if *self.peek() == Tok::Colon {
                self.next();
                parts.push(self.factor()?);
            } else if self.starts_factor() {
                parts.push(self.factor()?);
            } else {
                break;
            }
        }
        Ok(Term::seq(parts))
    }

    fn factor(&mut self) -> Result<Term, ProgramError> {
        let (l, c) = self.here();
        match self.next() {
            Tok::Str(s) => Ok(Term::word(&s)),
            Tok::Var(k, n) => Ok(Term::Var(Var::new(k, n))),
            Tok::Eps => Ok(Term::Empty),
            Tok::LParen => {
                let inner = self.term()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Term::paren(inner))
            }
            Tok::Ident(name) => {
                self.expect(Tok::LParen, "'(' after function name")?;
                let args = self.args()?;
                Ok(Term::Call(name, args))
            }
            other => Err(err(l, c, format!("expected a term, found {other:?}"))),
        }
    }

    fn args(&mut self) -> Result<Vec<Term>, ProgramError> {
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.next();
            return Ok(args);
        }
        loop {
            args.push(self.term()?);
            match self.next() {
                Tok::Comma => continue,
                Tok::RParen => return Ok(args),
                other => {
                    let (l, c) = self.here();
                    return Err(err(l, c, format!("expected ',' or ')', found {other:?}")));
                }
            }
        }
    }
}

/// Parses a whole program file.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let mut p = Parser { toks: Lexer::new(text).tokens()?, pos: 0 };
    let mut initial = None;
    let mut declared = BTreeSet::new();
    let mut rules = Vec::new();
    while *p.peek() != Tok::End {
        let (l, c) = p.here();
        match (p.peek().clone(), p.peek_at(1).clone()) {
            (Tok::Ident(kw), Tok::Colon) if kw == "start" => {
                p.next();
                p.next();
                if initial.is_some() {
                    return Err(err(l, c, "duplicate start declaration"));
                }
                initial = Some(p.term()?);
                p.expect(Tok::Semi, "';'")?;
            }
            (Tok::Ident(kw), Tok::Colon) if kw == "alphabet" => {
                p.next();
                p.next();
                while let Tok::Str(s) = p.peek().clone() {
                    p.next();
                    declared.extend(s.chars());
                }
                p.expect(Tok::Semi, "';'")?;
            }
            (Tok::Ident(_), Tok::LParen) => {
                let lhs = p.factor()?;
                p.expect(Tok::Eq, "'='")?;
                let rhs = p.term()?;
                p.expect(Tok::Semi, "';'")?;
                rules.push((lhs, rhs));
            }
            (other, _) => return Err(err(l, c, format!("expected a rule or declaration, found {other:?}"))),
        }
    }
    Program::new(initial.unwrap_or(Term::Empty), rules, declared)
}

/// Parses a single term (used for command-line bindings and targets).
pub fn parse_term(text: &str) -> Result<Term, ProgramError> {
    let mut p = Parser { toks: Lexer::new(text).tokens()?, pos: 0 };
    let t = p.term()?;
    if *p.peek() != Tok::End {
        let (l, c) = p.here();
        return Err(err(l, c, format!("trailing input {:?}", p.peek())));
    }
    Ok(t)
}

fn escape(c: char, out: &mut String) {
    match c {
        '\'' => out.push_str("\\'"),
        '\\' => out.push_str("\\\\"),
        '\n' => out.push_str("\\n"),
        '\t' => out.push_str("\\t"),
        c => out.push(c),
    }
}

fn print_items(items: &[Term], out: &mut String) {
    if items.is_empty() {
        out.push('ε');
        return;
    }
    let mut i = 0;
    let mut first = true;
    while i < items.len() {
        if !first {
            out.push(':');
        }
        first = false;
        if let Term::Char(_) = items[i] {
            out.push('\'');
            while let Some(Term::Char(c)) = items.get(i) {
                escape(*c, out);
                i += 1;
            }
            out.push('\'');
            continue;
        }
        print_item(&items[i], out);
        i += 1;
    }
}

fn print_item(t: &Term, out: &mut String) {
    match t {
        Term::Var(v) => out.push_str(&v.to_string()),
        Term::Paren(inner) => {
            out.push('(');
            if !inner.is_empty() {
                print_items(inner.items(), out);
            }
            out.push(')');
        }
        Term::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_items(a.items(), out);
            }
            out.push(')');
        }
        other => print_items(other.items(), out),
    }
}

pub fn print_term(t: &Term) -> String {
    let mut out = String::new();
    print_items(t.items(), &mut out);
    out
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if !p.alphabet.is_empty() {
        out.push_str("alphabet:");
        for c in &p.alphabet {
            out.push_str(" '");
            escape(*c, &mut out);
            out.push('\'');
        }
        out.push_str(";\n");
    }
    out.push_str("start: ");
    out.push_str(&print_term(&p.initial));
    out.push_str(";\n");
    for r in &p.rules {
        out.push_str(&print_term(&r.lhs));
        out.push_str(" = ");
        out.push_str(&print_term(&r.rhs));
        out.push_str(";\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIB: &str = "start: Fib(e.n);
        Fib(e.n) = F(e.n, 'b', 'a');
        F(ε, e.xs, e.ys) = (e.xs):(e.ys);
        F('I':e.ns, e.xs, e.ys) = F(e.ns, e.ys, e.xs:e.ys);";

    #[test]
    fn parses_fibonacci() {
        let p = parse_program(FIB).unwrap();
        assert_eq!(p.rules.len(), 3);
        assert_eq!(p.initial, Term::call("Fib", vec![Term::e("n")]));
        assert_eq!(p.alphabet, ['I', 'a', 'b'].into_iter().collect());
    }

    #[test]
    fn arities_and_errors() {
        let p = parse_program("start: g(); f(e.x)='a'; g()=f('b');").unwrap();
        assert_eq!(p.arity_of("f"), Some(1));
        assert_eq!(p.arity_of("g"), Some(0));
        assert!(matches!(parse_program("f(e.x)=e.y;"), Err(ProgramError::FreeRhsVariable { .. })));
        assert!(matches!(parse_program("f(e.x)='a'; f(e.x, e.y)='b';"), Err(ProgramError::ArityMismatch { .. })));
        assert!(matches!(parse_program("f(g(e.x))='a'; g(e.x)=e.x;"), Err(ProgramError::ActivePattern { .. })));
        assert!(matches!(parse_program("f(e.x)=h(e.x);"), Err(ProgramError::UndefinedFunction(_))));
        match parse_program("start: f(;") {
            Err(ProgramError::Syntax { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn printing_round_trips() {
        assert_eq!(print_term(&parse_term("Fib('III')").unwrap()), "Fib('III')");
        let t = Term::seq([Term::paren(Term::word("aba")), Term::paren(Term::word("baaba"))]);
        assert_eq!(print_term(&t), "('aba'):('baaba')");
        assert_eq!(print_term(&Term::call("F", vec![Term::Empty, Term::ch('b')])), "F(ε, 'b')");
        let p = parse_program(FIB).unwrap();
        assert_eq!(parse_program(&print_program(&p)).unwrap(), p);
        let q = parse_term("'it''s'").unwrap();
        assert_eq!(parse_term(&print_term(&q)).unwrap(), q);
    }

    #[test]
    fn juxtaposition_and_empty() {
        assert_eq!(parse_term("'a' e.x ()").unwrap(), parse_term("'a':e.x:()").unwrap());
        assert_eq!(parse_term("''").unwrap(), Term::Empty);
        assert_eq!(parse_term("").unwrap(), Term::Empty);
    }
}
