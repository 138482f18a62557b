//! Terms, variables and substitutions over the sequence data monoid.
//!
//! Data are finite sequences of characters and parenthesized sequences.
//! Concatenation is associative with the empty sequence as unit, and the
//! engine keeps every [`Term`] in a flattened canonical form so that
//! associativity is structural rather than something matching has to reason
//! about.

mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matching::{for_each_match, MatchControl, MatchStats};

/// Range of a variable: `e.` over all data, `s.` over characters,
/// `t.` over characters or parenthesized data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    E,
    S,
    T,
}

impl VarKind {
    pub fn prefix(self) -> char {
        match self {
            VarKind::E => 'e',
            VarKind::S => 's',
            VarKind::T => 't',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub kind: VarKind,
    pub name: String,
}

impl Var {
    pub fn new(kind: VarKind, name: impl Into<String>) -> Self {
        Var { kind, name: name.into() }
    }

    pub fn e(name: impl Into<String>) -> Self {
        Var::new(VarKind::E, name)
    }

    pub fn s(name: impl Into<String>) -> Self {
        Var::new(VarKind::S, name)
    }

    pub fn t(name: impl Into<String>) -> Self {
        Var::new(VarKind::T, name)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.kind.prefix(), self.name)
    }
}

/// A term of the language.
///
/// Canonical form: `Concat` children are never `Concat` or `Empty`, and a
/// `Concat` always has at least two children. Build terms through the
/// smart constructors ([`Term::seq`], [`Term::concat`], [`Term::word`]) or
/// run [`normalize`] on hand-assembled values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Term {
    Empty,
    Char(char),
    Var(Var),
    Paren(Box<Term>),
    Call(String, Vec<Term>),
    Concat(Vec<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("sort violation: {var} cannot be bound to {value}")]
    SortViolation { var: Var, value: String },
}

impl Term {
    pub fn ch(c: char) -> Term {
        Term::Char(c)
    }

    pub fn var(v: Var) -> Term {
        Term::Var(v)
    }

    pub fn e(name: &str) -> Term {
        Term::Var(Var::e(name))
    }

    pub fn s(name: &str) -> Term {
        Term::Var(Var::s(name))
    }

    pub fn t(name: &str) -> Term {
        Term::Var(Var::t(name))
    }

    pub fn paren(inner: Term) -> Term {
        Term::Paren(Box::new(inner))
    }

    pub fn call(name: impl Into<String>, args: Vec<Term>) -> Term {
        Term::Call(name.into(), args)
    }

    /// Word sugar: `'aba'` is `'a':'b':'a'`.
    pub fn word(w: &str) -> Term {
        Term::from_items(w.chars().map(Term::Char).collect())
    }

    /// Concatenation of arbitrary (possibly non-canonical) parts.
    pub fn seq<I: IntoIterator<Item = Term>>(parts: I) -> Term {
        let mut items = Vec::new();
        for p in parts {
            push_flat(&mut items, normalize(p));
        }
        Term::from_items(items)
    }

    pub fn concat(a: Term, b: Term) -> Term {
        Term::seq([a, b])
    }

    /// Builds a term from canonical items (no `Empty`, no `Concat`).
    pub fn from_items(mut items: Vec<Term>) -> Term {
        match items.len() {
            0 => Term::Empty,
            1 => items.pop().unwrap(),
            _ => Term::Concat(items),
        }
    }

    /// The top-level sequence view of a canonical term.
    pub fn items(&self) -> &[Term] {
        match self {
            Term::Empty => &[],
            Term::Concat(v) => v,
            other => std::slice::from_ref(other),
        }
    }

    pub fn into_items(self) -> Vec<Term> {
        match self {
            Term::Empty => Vec::new(),
            Term::Concat(v) => v,
            other => vec![other],
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Term::Empty)
    }

    /// No function calls.
    pub fn is_passive(&self) -> bool {
        match self {
            Term::Call(..) => false,
            Term::Paren(t) => t.is_passive(),
            Term::Concat(v) => v.iter().all(Term::is_passive),
            _ => true,
        }
    }

    /// No variables.
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Paren(t) => t.is_ground(),
            Term::Call(_, args) | Term::Concat(args) => args.iter().all(Term::is_ground),
            _ => true,
        }
    }

    /// Ground and passive: a datum.
    pub fn is_object(&self) -> bool {
        self.is_passive() && self.is_ground()
    }

    /// Number of constructor nodes (characters, variables, parentheses, calls).
    pub fn size(&self) -> usize {
        match self {
            Term::Empty => 0,
            Term::Char(_) | Term::Var(_) => 1,
            Term::Paren(t) => 1 + t.size(),
            Term::Call(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            Term::Concat(v) => v.iter().map(Term::size).sum(),
        }
    }

    pub fn contains_var(&self, v: &Var) -> bool {
        multiplicity(v, self) > 0
    }

    /// Characters occurring anywhere in the term.
    pub fn chars(&self, out: &mut BTreeSet<char>) {
        match self {
            Term::Char(c) => {
                out.insert(*c);
            }
            Term::Paren(t) => t.chars(out),
            Term::Call(_, v) | Term::Concat(v) => v.iter().for_each(|t| t.chars(out)),
            _ => {}
        }
    }

    /// Function names called anywhere in the term, with their arities.
    pub fn calls(&self, out: &mut Vec<(String, usize)>) {
        match self {
            Term::Paren(t) => t.calls(out),
            Term::Call(name, args) => {
                out.push((name.clone(), args.len()));
                args.iter().for_each(|t| t.calls(out));
            }
            Term::Concat(v) => v.iter().for_each(|t| t.calls(out)),
            _ => {}
        }
    }

    /// Renames every variable through `f`.
    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Var) -> Term {
        match self {
            Term::Var(v) => Term::Var(f(v)),
            Term::Paren(t) => Term::paren(t.map_vars(f)),
            Term::Call(n, args) => Term::Call(n.clone(), args.iter().map(|t| t.map_vars(f)).collect()),
            Term::Concat(v) => Term::Concat(v.iter().map(|t| t.map_vars(f)).collect()),
            other => other.clone(),
        }
    }
}

fn push_flat(items: &mut Vec<Term>, t: Term) {
    match t {
        Term::Empty => {}
        Term::Concat(v) => items.extend(v),
        other => items.push(other),
    }
}

/// Returns the canonical form of an arbitrary term. Idempotent.
pub fn normalize(raw: Term) -> Term {
    match raw {
        Term::Empty | Term::Char(_) | Term::Var(_) => raw,
        Term::Paren(t) => Term::Paren(Box::new(normalize(*t))),
        Term::Call(n, args) => Term::Call(n, args.into_iter().map(normalize).collect()),
        Term::Concat(v) => {
            let mut items = Vec::with_capacity(v.len());
            for t in v {
                push_flat(&mut items, normalize(t));
            }
            Term::from_items(items)
        }
    }
}

/// Variables of a term split by kind; every list is in order of first
/// occurrence in a left-to-right preorder walk.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VarSets {
    pub order: Vec<Var>,
    pub e: Vec<Var>,
    pub s: Vec<Var>,
    pub t: Vec<Var>,
}

impl VarSets {
    pub fn all(&self) -> &[Var] {
        &self.order
    }

    pub fn contains(&self, v: &Var) -> bool {
        self.order.contains(v)
    }
}

pub fn vars(t: &Term) -> VarSets {
    let mut out = VarSets::default();
    collect_vars(t, &mut out);
    out
}

/// Variables of several terms, first-occurrence order across the list.
pub fn vars_of_all<'a>(ts: impl IntoIterator<Item = &'a Term>) -> VarSets {
    let mut out = VarSets::default();
    for t in ts {
        collect_vars(t, &mut out);
    }
    out
}

fn collect_vars(t: &Term, out: &mut VarSets) {
    match t {
        Term::Var(v) => {
            if !out.order.contains(v) {
                out.order.push(v.clone());
                match v.kind {
                    VarKind::E => out.e.push(v.clone()),
                    VarKind::S => out.s.push(v.clone()),
                    VarKind::T => out.t.push(v.clone()),
                }
            }
        }
        Term::Paren(inner) => collect_vars(inner, out),
        Term::Call(_, v) | Term::Concat(v) => v.iter().for_each(|x| collect_vars(x, out)),
        _ => {}
    }
}

/// Number of occurrences of `v` in `t`.
pub fn multiplicity(v: &Var, t: &Term) -> usize {
    match t {
        Term::Var(w) => usize::from(w == v),
        Term::Paren(inner) => multiplicity(v, inner),
        Term::Call(_, xs) | Term::Concat(xs) => xs.iter().map(|x| multiplicity(v, x)).sum(),
        _ => 0,
    }
}

/// Checks the range constraint of a single binding.
pub fn check_binding(var: &Var, value: &Term) -> Result<(), TermError> {
    let ok = match var.kind {
        VarKind::E => true,
        VarKind::S => matches!(value, Term::Char(_)) || matches!(value, Term::Var(w) if w.kind == VarKind::S),
        VarKind::T => match value {
            Term::Char(_) | Term::Paren(_) => true,
            Term::Var(w) => w.kind != VarKind::E,
            _ => false,
        },
    };
    if ok {
        Ok(())
    } else {
        Err(TermError::SortViolation { var: var.clone(), value: crate::syntax::print_term(value) })
    }
}

/// A finite, well-sorted map from variables to terms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Substitution {
    bindings: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Var, Term)>>(pairs: I) -> Result<Self, TermError> {
        let mut s = Substitution::new();
        for (v, t) in pairs {
            s.bind(v, t)?;
        }
        Ok(s)
    }

    /// Adds a binding after checking its sort. Overwrites an existing one.
    pub fn bind(&mut self, var: Var, value: Term) -> Result<(), TermError> {
        let value = normalize(value);
        check_binding(&var, &value)?;
        self.bindings.insert(var, value);
        Ok(())
    }

    /// Adds a binding without the sort check; callers guarantee well-sortedness.
    pub(crate) fn bind_unchecked(&mut self, var: Var, value: Term) {
        self.bindings.insert(var, value);
    }

    pub(crate) fn unbind(&mut self, var: &Var) {
        self.bindings.remove(var);
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.bindings.get(v)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.bindings.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.bindings.keys()
    }

    /// True when every bound value is an object term.
    pub fn is_object(&self) -> bool {
        self.bindings.values().all(Term::is_object)
    }

    /// Keeps only bindings for the given variables.
    pub fn restrict(&self, keep: &[Var]) -> Substitution {
        Substitution {
            bindings: self.bindings.iter().filter(|(v, _)| keep.contains(v)).map(|(v, t)| (v.clone(), t.clone())).collect(),
        }
    }

    /// Homomorphic application; unbound variables stay in place.
    pub fn apply(&self, t: &Term) -> Result<Term, TermError> {
        for v in vars(t).order {
            if let Some(val) = self.bindings.get(&v) {
                check_binding(&v, val)?;
            }
        }
        Ok(self.apply_unchecked(t))
    }

    pub(crate) fn apply_unchecked(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => self.bindings.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::Empty | Term::Char(_) => t.clone(),
            Term::Paren(inner) => Term::paren(self.apply_unchecked(inner)),
            Term::Call(n, args) => Term::Call(n.clone(), args.iter().map(|a| self.apply_unchecked(a)).collect()),
            Term::Concat(v) => {
                let mut items = Vec::with_capacity(v.len());
                for x in v {
                    push_flat(&mut items, self.apply_unchecked(x));
                }
                Term::from_items(items)
            }
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        let mut out = Substitution::new();
        for (v, t) in &other.bindings {
            out.bindings.insert(v.clone(), self.apply_unchecked(t));
        }
        for (v, t) in &self.bindings {
            out.bindings.entry(v.clone()).or_insert_with(|| t.clone());
        }
        out
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{} ↦ {}", v, crate::syntax::print_term(t))?;
        }
        write!(f, "}}")
    }
}

/// Finds some `θ` with `θ(pattern) = subject`.
///
/// Variables of `subject` are treated as rigid constants, so the same routine
/// serves both ground instance checks and folding of parameterized
/// configurations.
pub fn instance_of(subject: &Term, pattern: &Term) -> Option<Substitution> {
    let mut found = None;
    for_each_match(&[(pattern.clone(), subject.clone())], &mut MatchStats::default(), &mut |s| {
        found = Some(s.clone());
        MatchControl::Stop
    });
    found
}

/// Renames every variable of `t` by appending `suffix` to its name.
pub fn rename_apart(t: &Term, suffix: &str) -> Term {
    t.map_vars(&mut |v| Var::new(v.kind, format!("{}{}", v.name, suffix)))
}

/// Supplies variable names not used elsewhere.
#[derive(Clone, Debug, Default)]
pub struct FreshNames {
    next: usize,
    prefix: String,
}

impl FreshNames {
    pub fn new(prefix: impl Into<String>) -> Self {
        FreshNames { next: 0, prefix: prefix.into() }
    }

    pub fn var(&mut self, kind: VarKind) -> Var {
        self.next += 1;
        Var::new(kind, format!("{}{}", self.prefix, self.next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_associativity_and_units() {
        let raw = Term::Concat(vec![Term::Concat(vec![Term::ch('a'), Term::ch('b')]), Term::ch('c')]);
        assert_eq!(normalize(raw), Term::word("abc"));
        let raw = Term::Concat(vec![Term::Empty, Term::ch('a')]);
        assert_eq!(normalize(raw), Term::ch('a'));
        let raw = Term::Paren(Box::new(Term::Concat(vec![Term::Empty, Term::Empty])));
        assert_eq!(normalize(raw), Term::paren(Term::Empty));
    }

    #[test]
    fn vars_in_first_occurrence_order() {
        let t = Term::call("f", vec![Term::e("x"), Term::e("x")]);
        let vs = vars(&t);
        assert_eq!(vs.e, vec![Var::e("x")]);
        assert_eq!(vs.order, vec![Var::e("x")]);
        let t = Term::seq([Term::ch('a'), Term::e("q"), Term::ch('a'), Term::e("q"), Term::ch('b')]);
        assert_eq!(vars(&t).e, vec![Var::e("q")]);
        let vs = vars(&Term::word("aba"));
        assert!(vs.order.is_empty() && vs.s.is_empty() && vs.t.is_empty());
    }

    #[test]
    fn multiplicities() {
        let f = Term::call("f", vec![Term::e("x"), Term::e("x")]);
        assert_eq!(multiplicity(&Var::e("x"), &f), 2);
        assert_eq!(multiplicity(&Var::e("y"), &f), 0);
        let t = Term::seq([Term::ch('a'), Term::e("q"), Term::ch('a'), Term::e("q"), Term::ch('b')]);
        assert_eq!(multiplicity(&Var::e("q"), &t), 2);
    }

    #[test]
    fn apply_and_sort_violation() {
        let th = Substitution::from_pairs([(Var::e("q"), Term::ch('a'))]).unwrap();
        assert_eq!(th.apply(&Term::seq([Term::ch('a'), Term::e("q")])).unwrap(), Term::word("aa"));
        let th = Substitution::from_pairs([(Var::e("n"), Term::word("III"))]).unwrap();
        assert_eq!(
            th.apply(&Term::call("Fib", vec![Term::e("n")])).unwrap(),
            Term::call("Fib", vec![Term::word("III")])
        );
        let err = Substitution::from_pairs([(Var::s("c"), Term::paren(Term::ch('a')))]);
        assert!(matches!(err, Err(TermError::SortViolation { .. })));
    }

    #[test]
    fn instance_witnesses() {
        let pat = Term::seq([Term::ch('b'), Term::e("y")]);
        let th = instance_of(&Term::word("ba"), &pat).unwrap();
        assert_eq!(th.get(&Var::e("y")), Some(&Term::ch('a')));
        let th = instance_of(&Term::ch('T'), &Term::e("x")).unwrap();
        assert_eq!(th.get(&Var::e("x")), Some(&Term::ch('T')));
        assert!(instance_of(&Term::word("ab"), &pat).is_none());
    }
}
