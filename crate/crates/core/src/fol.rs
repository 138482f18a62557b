//! First-order theories over the data monoid: the data theory, program
//! reachability overapproximations, goals, Mace4 rendering, and clause form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::program::{Program, Rule};
use crate::term::{rename_apart, vars, vars_of_all, Term, Var, VarKind};

pub const CONCAT: &str = "*";
pub const PAREN: &str = "b1";
pub const EMPTY: &str = "e0";
pub const DATA: &str = "R";

pub fn char_const(c: char) -> String {
    if c.is_ascii_alphanumeric() {
        format!("c_{c}")
    } else {
        format!("c_u{:x}", c as u32)
    }
}

pub fn const_char(name: &str) -> Option<char> {
    let rest = name.strip_prefix("c_")?;
    if let Some(hex) = rest.strip_prefix('u').filter(|h| h.len() > 1) {
        return u32::from_str_radix(hex, 16).ok().and_then(char::from_u32);
    }
    let mut it = rest.chars();
    let c = it.next()?;
    it.next().is_none().then_some(c)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum FoTerm {
    Var(String),
    Const(String),
    App(String, Vec<FoTerm>),
}

impl FoTerm {
    pub fn var(name: impl Into<String>) -> FoTerm {
        FoTerm::Var(name.into())
    }

    pub fn concat(a: FoTerm, b: FoTerm) -> FoTerm {
        FoTerm::App(CONCAT.into(), vec![a, b])
    }

    pub fn paren(a: FoTerm) -> FoTerm {
        FoTerm::App(PAREN.into(), vec![a])
    }

    pub fn empty() -> FoTerm {
        FoTerm::Const(EMPTY.into())
    }

    pub fn ch(c: char) -> FoTerm {
        FoTerm::Const(char_const(c))
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            FoTerm::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone())
                }
            }
            FoTerm::Const(_) => {}
            FoTerm::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    fn subst(&self, s: &BTreeMap<String, FoTerm>) -> FoTerm {
        match self {
            FoTerm::Var(v) => s.get(v).cloned().unwrap_or_else(|| self.clone()),
            FoTerm::Const(_) => self.clone(),
            FoTerm::App(f, args) => FoTerm::App(f.clone(), args.iter().map(|a| a.subst(s)).collect()),
        }
    }

    fn symbols(&self, consts: &mut BTreeSet<String>, funs: &mut BTreeSet<(String, usize)>) {
        match self {
            FoTerm::Var(_) => {}
            FoTerm::Const(c) => {
                consts.insert(c.clone());
            }
            FoTerm::App(f, args) => {
                funs.insert((f.clone(), args.len()));
                args.iter().for_each(|a| a.symbols(consts, funs));
            }
        }
    }
}

/// Encodes a passive ℒ term; ℒ variables keep their printed names.
pub fn encode_term(t: &Term) -> FoTerm {
    fn item(t: &Term) -> FoTerm {
        match t {
            Term::Char(c) => FoTerm::ch(*c),
            Term::Var(v) => FoTerm::Var(v.to_string()),
            Term::Paren(inner) => FoTerm::paren(encode_term(inner)),
            Term::Call(f, _) => panic!("call {f} inside an encoded data term"),
            Term::Empty | Term::Concat(_) => unreachable!(),
        }
    }
    let items = t.items();
    match items.split_last() {
        None => FoTerm::empty(),
        Some((last, init)) => init.iter().rev().fold(item(last), |acc, x| FoTerm::concat(item(x), acc)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Formula {
    True,
    False,
    Eq { left: FoTerm, right: FoTerm },
    Pred { name: String, args: Vec<FoTerm> },
    Not { body: Box<Formula> },
    And { parts: Vec<Formula> },
    Or { parts: Vec<Formula> },
    Implies { premise: Box<Formula>, conclusion: Box<Formula> },
    Forall { vars: Vec<String>, body: Box<Formula> },
    Exists { vars: Vec<String>, body: Box<Formula> },
}

impl Formula {
    pub fn eq(a: FoTerm, b: FoTerm) -> Formula {
        Formula::Eq { left: a, right: b }
    }

    pub fn pred(name: impl Into<String>, args: Vec<FoTerm>) -> Formula {
        Formula::Pred { name: name.into(), args }
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not { body: Box::new(f) }
    }

    pub fn and(parts: Vec<Formula>) -> Formula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::And { parts } => flat.extend(parts),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Formula::True,
            1 => flat.pop().unwrap(),
            _ => Formula::And { parts: flat },
        }
    }

    pub fn or(parts: Vec<Formula>) -> Formula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::Or { parts } => flat.extend(parts),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Formula::False,
            1 => flat.pop().unwrap(),
            _ => Formula::Or { parts: flat },
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        if a == Formula::True {
            return b;
        }
        Formula::Implies { premise: Box::new(a), conclusion: Box::new(b) }
    }

    pub fn forall(vars: Vec<String>, body: Formula) -> Formula {
        if vars.is_empty() {
            body
        } else {
            Formula::Forall { vars, body: Box::new(body) }
        }
    }

    pub fn exists(vars: Vec<String>, body: Formula) -> Formula {
        if vars.is_empty() {
            body
        } else {
            Formula::Exists { vars, body: Box::new(body) }
        }
    }

    /// Free variables in order of first occurrence.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.free_into(&mut Vec::new(), &mut out);
        out
    }

    fn free_into(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        let add = |t: &FoTerm, bound: &Vec<String>, out: &mut Vec<String>| {
            let mut vs = Vec::new();
            t.collect_vars(&mut vs);
            for v in vs {
                if !bound.contains(&v) && !out.contains(&v) {
                    out.push(v);
                }
            }
        };
        match self {
            Formula::True | Formula::False => {}
            Formula::Eq { left, right } => {
                add(left, bound, out);
                add(right, bound, out);
            }
            Formula::Pred { args, .. } => args.iter().for_each(|a| add(a, bound, out)),
            Formula::Not { body } => body.free_into(bound, out),
            Formula::And { parts } | Formula::Or { parts } => parts.iter().for_each(|p| p.free_into(bound, out)),
            Formula::Implies { premise, conclusion } => {
                premise.free_into(bound, out);
                conclusion.free_into(bound, out);
            }
            Formula::Forall { vars, body } | Formula::Exists { vars, body } => {
                let n = bound.len();
                bound.extend(vars.iter().cloned());
                body.free_into(bound, out);
                bound.truncate(n);
            }
        }
    }

    fn symbols(&self, consts: &mut BTreeSet<String>, funs: &mut BTreeSet<(String, usize)>, preds: &mut BTreeSet<(String, usize)>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Eq { left, right } => {
                left.symbols(consts, funs);
                right.symbols(consts, funs);
            }
            Formula::Pred { name, args } => {
                preds.insert((name.clone(), args.len()));
                args.iter().for_each(|a| a.symbols(consts, funs));
            }
            Formula::Not { body } | Formula::Forall { body, .. } | Formula::Exists { body, .. } => {
                body.symbols(consts, funs, preds)
            }
            Formula::And { parts } | Formula::Or { parts } => parts.iter().for_each(|p| p.symbols(consts, funs, preds)),
            Formula::Implies { premise, conclusion } => {
                premise.symbols(consts, funs, preds);
                conclusion.symbols(consts, funs, preds);
            }
        }
    }

    /// Predicates occurring in the formula.
    pub fn predicates(&self) -> BTreeSet<String> {
        let (mut c, mut f, mut p) = Default::default();
        self.symbols(&mut c, &mut f, &mut p);
        p.into_iter().map(|(n, _)| n).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Signature {
    pub constants: Vec<String>,
    pub functions: Vec<(String, usize)>,
    pub predicates: Vec<(String, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxiomKind {
    Associativity,
    LeftUnit,
    RightUnit,
    Distinct,
    DataBase,
    DataParen,
    DataConcat,
    Program,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Axiom {
    pub kind: AxiomKind,
    pub label: String,
    pub formula: Formula,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FoTheory {
    pub axioms: Vec<Axiom>,
    /// Closed formula to refute; a model must falsify it.
    pub goal: Option<Formula>,
    /// Characters of the embedded data theory, when there is one.
    pub data_chars: Option<Vec<char>>,
}

impl FoTheory {
    pub fn signature(&self) -> Signature {
        let (mut consts, mut funs, mut preds) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
        for a in &self.axioms {
            a.formula.symbols(&mut consts, &mut funs, &mut preds);
        }
        if let Some(g) = &self.goal {
            g.symbols(&mut consts, &mut funs, &mut preds);
        }
        Signature {
            constants: consts.into_iter().collect(),
            functions: funs.into_iter().collect(),
            predicates: preds.into_iter().collect(),
        }
    }

    pub fn push(&mut self, kind: AxiomKind, label: impl Into<String>, formula: Formula) {
        self.axioms.push(Axiom { kind, label: label.into(), formula });
    }

    /// Characters named by constants anywhere in the theory.
    pub fn mentioned_chars(&self) -> BTreeSet<char> {
        self.signature().constants.iter().filter_map(|c| const_char(c)).collect()
    }
}

fn v(name: &str) -> FoTerm {
    FoTerm::var(name)
}

/// The theory of the data monoid over `alphabet`.
pub fn encode_data_theory(alphabet: &BTreeSet<char>) -> FoTheory {
    let mut th = FoTheory { data_chars: Some(alphabet.iter().copied().collect()), ..Default::default() };
    let xyz = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    th.push(
        AxiomKind::Associativity,
        "associativity",
        Formula::forall(
            xyz.clone(),
            Formula::eq(
                FoTerm::concat(FoTerm::concat(v("x"), v("y")), v("z")),
                FoTerm::concat(v("x"), FoTerm::concat(v("y"), v("z"))),
            ),
        ),
    );
    th.push(
        AxiomKind::LeftUnit,
        "left unit",
        Formula::forall(vec!["x".into()], Formula::eq(FoTerm::concat(FoTerm::empty(), v("x")), v("x"))),
    );
    th.push(
        AxiomKind::RightUnit,
        "right unit",
        Formula::forall(vec!["x".into()], Formula::eq(FoTerm::concat(v("x"), FoTerm::empty()), v("x"))),
    );
    let mut constants = vec![FoTerm::empty()];
    constants.extend(alphabet.iter().map(|c| FoTerm::ch(*c)));
    let mut distinct = Vec::new();
    for i in 0..constants.len() {
        for j in i + 1..constants.len() {
            distinct.push(Formula::not(Formula::eq(constants[i].clone(), constants[j].clone())));
        }
    }
    if !distinct.is_empty() {
        th.push(AxiomKind::Distinct, "distinct constants", Formula::and(distinct));
    }
    th.push(
        AxiomKind::DataBase,
        "data constants",
        Formula::and(constants.iter().map(|c| Formula::pred(DATA, vec![c.clone()])).collect()),
    );
    th.push(
        AxiomKind::DataParen,
        "data closed under parentheses",
        Formula::forall(
            vec!["x".into()],
            Formula::implies(Formula::pred(DATA, vec![v("x")]), Formula::pred(DATA, vec![FoTerm::paren(v("x"))])),
        ),
    );
    th.push(
        AxiomKind::DataConcat,
        "data closed under concatenation",
        Formula::forall(
            vec!["x".into(), "y".into()],
            Formula::implies(
                Formula::and(vec![Formula::pred(DATA, vec![v("x")]), Formula::pred(DATA, vec![v("y")])]),
                Formula::pred(DATA, vec![FoTerm::concat(v("x"), v("y"))]),
            ),
        ),
    );
    th
}

/// The sort guard of an ℒ variable: data for e-variables, a character for
/// s-variables, a character or a parenthesized datum for t-variables.
pub fn guard(var: &Var, alphabet: &BTreeSet<char>, fresh: &mut usize) -> Formula {
    let x = FoTerm::Var(var.to_string());
    let is_char = || Formula::or(alphabet.iter().map(|c| Formula::eq(x.clone(), FoTerm::ch(*c))).collect());
    match var.kind {
        VarKind::E => Formula::pred(DATA, vec![x.clone()]),
        VarKind::S => is_char(),
        VarKind::T => {
            *fresh += 1;
            let y = format!("y{fresh}");
            Formula::or(vec![
                is_char(),
                Formula::exists(
                    vec![y.clone()],
                    Formula::and(vec![
                        Formula::eq(x.clone(), FoTerm::paren(v(&y))),
                        Formula::pred(DATA, vec![v(&y)]),
                    ]),
                ),
            ])
        }
    }
}

fn guards(vs: &[Var], alphabet: &BTreeSet<char>, fresh: &mut usize) -> Formula {
    Formula::and(vs.iter().map(|x| guard(x, alphabet, fresh)).collect())
}

fn names(vs: &[Var]) -> Vec<String> {
    vs.iter().map(|x| x.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("rule {0}: right-hand side is neither passive nor a single call with passive arguments")]
    UnsupportedShape(usize),
    #[error("function {0} is not defined")]
    UnknownFunction(String),
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("target must be `f = pattern` or `f(patterns)`")]
    BadTarget,
}

#[derive(Clone, Debug, Default)]
pub struct EncodeOptions {
    /// Drop argument positions that only count down, never inspected
    /// elsewhere; reproduces the two-place invariant of the Fibonacci pair.
    pub project_counters: bool,
}

/// A program's reachability overapproximation.
#[derive(Clone, Debug, Serialize)]
pub struct ReachabilityEncoding {
    pub theory: FoTheory,
    /// Kept argument positions per function.
    pub kept: BTreeMap<String, Vec<usize>>,
    pub alphabet: BTreeSet<char>,
}

pub fn reach_pred(f: &str) -> String {
    format!("Reach_{f}")
}

pub fn ret_pred(f: &str) -> String {
    format!("Ret_{f}")
}

impl ReachabilityEncoding {
    fn reach_atom(&self, f: &str, args: &[Term]) -> Formula {
        let kept = &self.kept[f];
        Formula::pred(reach_pred(f), kept.iter().map(|&i| encode_term(&args[i])).collect())
    }
}

/// Argument positions that behave as pure counters.
pub fn counter_positions(p: &Program) -> BTreeMap<String, BTreeSet<usize>> {
    let mut counters: BTreeMap<String, BTreeSet<usize>> =
        p.functions().into_iter().map(|(f, k)| (f, (0..k).collect())).collect();
    loop {
        let mut changed = false;
        for r in &p.rules {
            let f = r.function().to_string();
            for i in counters[&f].clone() {
                let pat = &r.patterns()[i];
                let pv = vars(pat);
                let mut ok = pv.s.is_empty() && pv.t.is_empty() && pv.e.len() <= 1 && pat.items().iter().all(|t| !matches!(t, Term::Paren(_)));
                for (j, other) in r.patterns().iter().enumerate() {
                    if j != i && pv.order.iter().any(|x| other.contains_var(x)) {
                        ok = false;
                    }
                }
                if ok {
                    for x in &pv.order {
                        if !only_at_counters(&r.rhs, x, &counters, true) {
                            ok = false;
                        }
                    }
                }
                if !ok {
                    counters.get_mut(&f).unwrap().remove(&i);
                    changed = true;
                }
            }
        }
        if !changed {
            return counters;
        }
    }
}

/// True when every occurrence of `x` in `t` is an entire argument at a
/// counter position of some call.
fn only_at_counters(t: &Term, x: &Var, counters: &BTreeMap<String, BTreeSet<usize>>, top: bool) -> bool {
    match t {
        Term::Var(y) => y != x || !top,
        Term::Char(_) | Term::Empty => true,
        Term::Paren(inner) => !inner.contains_var(x),
        Term::Concat(items) => items.iter().all(|i| !i.contains_var(x) || matches!(i, Term::Call(..)) && only_at_counters(i, x, counters, true)),
        Term::Call(g, args) => args.iter().enumerate().all(|(i, a)| {
            if !a.contains_var(x) {
                return true;
            }
            let at_counter = counters.get(g).is_some_and(|c| c.contains(&i));
            if at_counter {
                // the whole argument must be the variable (or a call chain ending in it)
                match a {
                    Term::Var(y) => y == x,
                    Term::Call(..) => only_at_counters(a, x, counters, true),
                    _ => false,
                }
            } else {
                matches!(a, Term::Call(..)) && only_at_counters(a, x, counters, true)
            }
        }),
    }
}

/// Replaces each outermost call in `t` by a fresh variable; returns the
/// rewritten term and the calls with their stand-ins.
fn abstract_calls(t: &Term, fresh: &mut usize, out: &mut Vec<(String, Term)>) -> Term {
    match t {
        Term::Call(..) => {
            *fresh += 1;
            let name = format!("e.r{fresh}");
            out.push((name.clone(), t.clone()));
            Term::Var(Var::e(format!("r{fresh}")))
        }
        Term::Paren(inner) => Term::paren(abstract_calls(inner, fresh, out)),
        Term::Concat(items) => Term::seq(items.iter().map(|i| abstract_calls(i, fresh, out))),
        other => other.clone(),
    }
}

/// Encodes the non-deterministic rewriting overapproximation of `p`.
pub fn encode_program_overapprox(p: &Program, opts: &EncodeOptions) -> Result<ReachabilityEncoding, EncodeError> {
    for r in &p.rules {
        let flat = match &r.rhs {
            Term::Call(_, args) => args.iter().all(Term::is_passive),
            other => other.is_passive(),
        };
        if !flat {
            return Err(EncodeError::UnsupportedShape(r.index));
        }
    }
    let counters = if opts.project_counters { counter_positions(p) } else { BTreeMap::new() };
    let kept: BTreeMap<String, Vec<usize>> = p
        .functions()
        .into_iter()
        .map(|(f, k)| {
            let drop = counters.get(&f).cloned().unwrap_or_default();
            let keep = (0..k).filter(|i| !drop.contains(i)).collect();
            (f, keep)
        })
        .collect();
    let mut enc = ReachabilityEncoding { theory: FoTheory::default(), kept, alphabet: p.alphabet.clone() };
    let mut axioms: Vec<(String, Formula)> = Vec::new();
    let mut fresh = 0usize;

    // seeds from the initial term; nested calls feed their results outward
    seed_calls(&enc, &p.initial, Formula::True, &[], &mut fresh, &mut axioms, "start");
    for r in &p.rules {
        let f = r.function();
        let lhs_vars = vars(&r.lhs).order;
        let premise = enc.reach_atom(f, r.patterns());
        let label = format!("rule {}", r.index);
        match &r.rhs {
            Term::Call(g, args) => {
                let conclusion = enc.reach_atom(g, args);
                axioms.push((label.clone(), close(&enc, &lhs_vars, premise, conclusion, &mut fresh)));
                if g == f {
                    continue;
                }
                let y = "y".to_string();
                axioms.push((
                    format!("{label} return"),
                    Formula::forall(
                        vec![y.clone()],
                        Formula::implies(
                            Formula::pred(ret_pred(g), vec![v(&y)]),
                            Formula::pred(ret_pred(f), vec![v(&y)]),
                        ),
                    ),
                ));
            }
            rhs => {
                let conclusion = Formula::pred(ret_pred(f), vec![encode_term(rhs)]);
                axioms.push((label, close(&enc, &lhs_vars, premise, conclusion, &mut fresh)));
            }
        }
    }
    let mut th = encode_data_theory(&BTreeSet::new());
    th.axioms.retain(|a| a.kind != AxiomKind::Distinct);
    for (label, f) in axioms {
        th.push(AxiomKind::Program, label, f);
    }
    enc.theory = th;
    Ok(enc)
}

/// Universal closure of `guards(vars) ∧ premise → conclusion` over the
/// variables with kept occurrences.
fn close(enc: &ReachabilityEncoding, vs: &[Var], premise: Formula, conclusion: Formula, fresh: &mut usize) -> Formula {
    let mut present = premise.free_vars();
    for x in conclusion.free_vars() {
        if !present.contains(&x) {
            present.push(x);
        }
    }
    let used: Vec<Var> = vs.iter().filter(|x| present.contains(&x.to_string())).cloned().collect();
    let mut extra: Vec<String> = present.iter().filter(|n| !vs.iter().any(|x| &x.to_string() == *n)).cloned().collect();
    let mut all = names(&used);
    all.append(&mut extra);
    let g = guards(&used, &enc.alphabet, fresh);
    Formula::forall(all, Formula::implies(Formula::and(vec![g, premise]), conclusion))
}

fn seed_calls(
    enc: &ReachabilityEncoding,
    t: &Term,
    context: Formula,
    outer_vars: &[Var],
    fresh: &mut usize,
    axioms: &mut Vec<(String, Formula)>,
    label: &str,
) {
    match t {
        Term::Call(f, args) => {
            // inner calls first; their results become premises
            let mut calls = Vec::new();
            let abstracted: Vec<Term> = args.iter().map(|a| abstract_calls(a, fresh, &mut calls)).collect();
            let mut premises = vec![context.clone()];
            for (name, call) in &calls {
                seed_calls(enc, call, context.clone(), outer_vars, fresh, axioms, label);
                let Term::Call(g, _) = call else { unreachable!() };
                premises.push(Formula::pred(ret_pred(g), vec![FoTerm::Var(name.clone())]));
            }
            let vs = vars_of_all(args.iter()).order;
            let mut all_vars: Vec<Var> = outer_vars.to_vec();
            all_vars.extend(vs.into_iter().filter(|x| !outer_vars.contains(x)));
            let conclusion = enc.reach_atom(f, &abstracted);
            let f = close(enc, &all_vars, Formula::and(premises), conclusion, fresh);
            axioms.push((label.to_string(), f));
        }
        Term::Paren(inner) => seed_calls(enc, inner, context, outer_vars, fresh, axioms, label),
        Term::Concat(items) => {
            for i in items {
                seed_calls(enc, i, context.clone(), outer_vars, fresh, axioms, label);
            }
        }
        _ => {}
    }
}

/// A verification target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// `f(p1, …, pk)`: some call of `f` with arguments of these shapes.
    Reaches { function: String, patterns: Vec<Term> },
    /// `f = pattern`: some call of `f` returns a value of this shape.
    Returns { function: String, pattern: Term },
}

impl Target {
    pub fn parse(text: &str) -> Result<Target, EncodeError> {
        if let Some((f, pat)) = text.split_once('=') {
            let f = f.trim();
            let pattern = crate::syntax::parse_term(pat.trim()).map_err(|_| EncodeError::BadTarget)?;
            if f.is_empty() || !pattern.is_passive() {
                return Err(EncodeError::BadTarget);
            }
            return Ok(Target::Returns { function: f.to_string(), pattern });
        }
        match crate::syntax::parse_term(text.trim()) {
            Ok(Term::Call(f, args)) if args.iter().all(Term::is_passive) => {
                Ok(Target::Reaches { function: f, patterns: args })
            }
            _ => Err(EncodeError::BadTarget),
        }
    }
}

/// Goal hypothesis "the target is reachable", together with the axioms it
/// depends on. Predicates irrelevant to the goal are dropped, which keeps
/// their characters out of the data theory.
pub fn encode_exit_goal(p: &Program, enc: &ReachabilityEncoding, targets: &[Target]) -> Result<FoTheory, EncodeError> {
    let mut fresh = 1000usize;
    let mut disjuncts = Vec::new();
    for target in targets {
        disjuncts.push(target_formula(p, enc, target, &mut fresh)?);
    }
    let goal = Formula::or(disjuncts);
    Ok(with_goal(&enc.theory, goal))
}

fn target_formula(p: &Program, enc: &ReachabilityEncoding, target: &Target, fresh: &mut usize) -> Result<Formula, EncodeError> {
    match target {
        Target::Reaches { function, patterns } => {
            let k = p.arity_of(function).ok_or_else(|| EncodeError::UnknownFunction(function.clone()))?;
            if k != patterns.len() {
                return Err(EncodeError::ArityMismatch(function.clone()));
            }
            let vs = vars_of_all(patterns.iter()).order;
            let atom = enc.reach_atom(function, patterns);
            let used: Vec<Var> = vs.into_iter().filter(|x| atom.free_vars().contains(&x.to_string())).collect();
            Ok(Formula::exists(names(&used), Formula::and(vec![guards(&used, &enc.alphabet, fresh), atom])))
        }
        Target::Returns { function, pattern } => {
            let rules: Vec<&Rule> = p.rules_for(function).collect();
            if rules.is_empty() {
                return Err(EncodeError::UnknownFunction(function.clone()));
            }
            if rules.iter().all(|r| r.rhs.is_passive()) {
                // a value is returned only through some rule's right-hand side
                let mut parts = Vec::new();
                for r in rules {
                    let lhs = rename_apart(&r.lhs, "_1");
                    let rhs = rename_apart(&r.rhs, "_1");
                    if rhs.is_ground() && pattern.is_ground() && rhs != *pattern {
                        continue;
                    }
                    let mut vs = vars(&lhs).order;
                    for x in vars(pattern).order {
                        if !vs.contains(&x) {
                            vs.push(x);
                        }
                    }
                    let Term::Call(_, pats) = &lhs else { unreachable!() };
                    let atom = enc.reach_atom(function, pats);
                    let same = if crate::term::instance_of(&rhs, pattern).is_some() {
                        Formula::True
                    } else {
                        Formula::eq(encode_term(&rhs), encode_term(pattern))
                    };
                    let body = Formula::and(vec![atom, same]);
                    let free = body.free_vars();
                    let used: Vec<Var> = vs.into_iter().filter(|x| free.contains(&x.to_string())).collect();
                    parts.push(Formula::exists(names(&used), Formula::and(vec![guards(&used, &enc.alphabet, fresh), body])));
                }
                Ok(Formula::or(parts))
            } else {
                let vs = vars(pattern).order;
                let atom = Formula::pred(ret_pred(function), vec![encode_term(pattern)]);
                Ok(Formula::exists(names(&vs), Formula::and(vec![guards(&vs, &enc.alphabet, fresh), atom])))
            }
        }
    }
}

/// Copies `base`, sets the goal, drops axioms not needed to derive the
/// goal's predicates, and instantiates the data theory for the characters
/// that remain.
pub fn with_goal(base: &FoTheory, goal: Formula) -> FoTheory {
    let mut relevant: BTreeSet<String> = goal.predicates();
    loop {
        let before = relevant.len();
        for a in &base.axioms {
            if a.kind == AxiomKind::Program && head_predicates(&a.formula).iter().any(|h| relevant.contains(h)) {
                relevant.extend(a.formula.predicates());
            }
        }
        if relevant.len() == before {
            break;
        }
    }
    let program: Vec<Axiom> = base
        .axioms
        .iter()
        .filter(|a| a.kind != AxiomKind::Program || head_predicates(&a.formula).iter().any(|h| relevant.contains(h)))
        .filter(|a| a.kind == AxiomKind::Program || a.kind == AxiomKind::User)
        .cloned()
        .collect();
    let mut partial = FoTheory { axioms: program, goal: Some(goal), data_chars: None };
    let chars = partial.mentioned_chars();
    let mut th = encode_data_theory(&chars);
    th.axioms.append(&mut partial.axioms);
    th.goal = partial.goal.take();
    th
}

/// The program axioms alone, with the data theory for their characters.
pub fn program_theory(base: &FoTheory) -> FoTheory {
    let program: Vec<Axiom> = base.axioms.iter().filter(|a| a.kind == AxiomKind::Program).cloned().collect();
    let partial = FoTheory { axioms: program, goal: None, data_chars: None };
    let mut th = encode_data_theory(&partial.mentioned_chars());
    th.axioms.extend(partial.axioms);
    th
}

fn head_predicates(f: &Formula) -> Vec<String> {
    match f {
        Formula::Forall { body, .. } => head_predicates(body),
        Formula::Implies { conclusion, .. } => head_predicates(conclusion),
        Formula::Pred { name, .. } => vec![name.clone()],
        Formula::And { parts } => parts.iter().flat_map(head_predicates).collect(),
        _ => Vec::new(),
    }
}

/// `∃ vars. guards ∧ ⋀ lᵢ = rᵢ` over the data theory.
pub fn encode_equations_goal(eqs: &[(Term, Term)]) -> FoTheory {
    let mut alphabet = BTreeSet::new();
    for (l, r) in eqs {
        l.chars(&mut alphabet);
        r.chars(&mut alphabet);
    }
    let vs = vars_of_all(eqs.iter().flat_map(|(l, r)| [l, r])).order;
    // equalities survive collapsing every unmentioned character into one
    if vs.iter().any(|v| v.kind != crate::term::VarKind::E) {
        if let Some(c) = ('a'..='z').chain('A'..='Z').find(|c| !alphabet.contains(c)) {
            alphabet.insert(c);
        }
    }
    let mut fresh = 0;
    let body = Formula::and(
        std::iter::once(guards(&vs, &alphabet, &mut fresh))
            .chain(eqs.iter().map(|(l, r)| Formula::eq(encode_term(l), encode_term(r))))
            .collect(),
    );
    with_goal(&FoTheory::default(), Formula::exists(names(&vs), body))
}

fn call_parts(t: &Term) -> Option<(&str, &[Term])> {
    match t {
        Term::Call(f, args) => Some((f, args)),
        _ => None,
    }
}

/// The overapproximated one-step reachability of `rule` from `config`,
/// simplified argumentwise.
pub fn encode_one_step_goal(config: &Term, rule: &Rule, alphabet: &BTreeSet<char>) -> Result<Formula, EncodeError> {
    let (f, us) = call_parts(config).ok_or(EncodeError::BadTarget)?;
    if f != rule.function() || us.len() != rule.arity() {
        return Err(EncodeError::ArityMismatch(format!("{f} against rule {}", rule.index)));
    }
    let lhs = rename_apart(&rule.lhs, "_1");
    let (_, ps) = call_parts(&lhs).unwrap();
    let mut conj = Vec::new();
    let mut chosen: BTreeMap<Var, Term> = BTreeMap::new();
    for (u, p) in us.iter().zip(ps) {
        match p {
            Term::Var(w) if w.kind == VarKind::E && !ps.iter().any(|q| q != p && q.contains_var(w)) => {
                match chosen.get(w) {
                    Some(first) => conj.push(Formula::eq(encode_term(first), encode_term(u))),
                    None => {
                        chosen.insert(w.clone(), u.clone());
                    }
                }
            }
            _ => conj.push(Formula::eq(encode_term(u), encode_term(p))),
        }
    }
    let body = Formula::and(conj);
    let free = body.free_vars();
    let mut vs = vars_of_all(us.iter()).order;
    vs.extend(vars(&lhs).order);
    let used: Vec<Var> = vs.into_iter().filter(|x| free.contains(&x.to_string())).collect();
    let mut fresh = 0;
    Ok(Formula::exists(names(&used), Formula::and(vec![guards(&used, alphabet, &mut fresh), body])))
}

/// The theory of [`encode_one_step_goal`].
pub fn one_step_theory(config: &Term, rule: &Rule, alphabet: &BTreeSet<char>) -> Result<FoTheory, EncodeError> {
    let goal = encode_one_step_goal(config, rule, alphabet)?;
    Ok(with_goal(&FoTheory::default(), goal))
}

fn tuple(ts: &[Term]) -> FoTerm {
    encode_term(&Term::seq(ts.iter().map(|t| Term::paren(t.clone()))))
}

/// The exact ordered-matching condition for `rule`, with a negated conjunct
/// per earlier rule. Only for export.
pub fn encode_ordered_goal(config: &Term, rules: &[Rule], index: usize, alphabet: &BTreeSet<char>) -> Result<Formula, EncodeError> {
    let (_, us) = call_parts(config).ok_or(EncodeError::BadTarget)?;
    let mut fresh = 0;
    let ev = "e.v".to_string();
    let qs = vars_of_all(us.iter()).order;
    let mut conj = vec![guards(&qs, alphabet, &mut fresh), Formula::eq(v(&ev), tuple(us))];
    for r in rules.iter().filter(|r| r.index <= index) {
        let lhs = rename_apart(&r.lhs, &format!("_{}", r.index));
        let (_, ps) = call_parts(&lhs).unwrap();
        let ws = vars(&lhs).order;
        let eq = Formula::eq(v(&ev), tuple(ps));
        if r.index < index {
            conj.push(Formula::forall(
                names(&ws),
                Formula::implies(guards(&ws, alphabet, &mut fresh), Formula::not(eq)),
            ));
        } else {
            conj.push(Formula::exists(names(&ws), Formula::and(vec![guards(&ws, alphabet, &mut fresh), eq])));
        }
    }
    let mut all = vec![ev];
    all.extend(names(&qs));
    Ok(Formula::exists(all, Formula::and(conj)))
}

// ---------------------------------------------------------------------------
// Rendering

fn show_term(t: &FoTerm, f: &mut fmt::Formatter<'_>, mace: bool) -> fmt::Result {
    match t {
        FoTerm::Var(x) => write!(f, "{}", if mace { mace_var(x) } else { x.clone() }),
        FoTerm::Const(c) if !mace => match const_char(c) {
            Some(ch) => write!(f, "'{ch}'"),
            None if c == EMPTY => write!(f, "ε"),
            None => write!(f, "{c}"),
        },
        FoTerm::Const(c) => write!(f, "{c}"),
        FoTerm::App(op, args) if op == CONCAT && args.len() == 2 => {
            if mace {
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    let wrap = matches!(a, FoTerm::App(o, _) if o == CONCAT);
                    if wrap {
                        write!(f, "(")?;
                    }
                    show_term(a, f, mace)?;
                    if wrap {
                        write!(f, ")")?;
                    }
                }
                Ok(())
            } else {
                // associativity makes the nesting invisible
                show_term(&args[0], f, mace)?;
                write!(f, ":")?;
                show_term(&args[1], f, mace)
            }
        }
        FoTerm::App(op, args) if op == PAREN && args.len() == 1 && !mace => {
            write!(f, "(")?;
            show_term(&args[0], f, mace)?;
            write!(f, ")")
        }
        FoTerm::App(op, args) => {
            write!(f, "{op}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                show_term(a, f, mace)?;
            }
            write!(f, ")")
        }
    }
}

/// Mace4 reads identifiers starting with u–z as variables.
fn mace_var(x: &str) -> String {
    let plain = x.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain && x.starts_with(|c: char| ('u'..='z').contains(&c)) {
        return x.to_string();
    }
    let mut out = String::from("x");
    for c in x.chars() {
        out.push(if c.is_ascii_alphanumeric() { c } else { '_' });
    }
    out
}

fn show(fm: &Formula, f: &mut fmt::Formatter<'_>, mace: bool, top: bool) -> fmt::Result {
    let (and, or, not, imp, all, ex) =
        if mace { (" & ", " | ", "-", " -> ", "all", "exists") } else { (" ∧ ", " ∨ ", "¬", " → ", "∀", "∃") };
    let sub = |g: &Formula, f: &mut fmt::Formatter<'_>| -> fmt::Result {
        let atomic = matches!(g, Formula::Eq { .. } | Formula::Pred { .. } | Formula::True | Formula::False | Formula::Not { .. });
        if atomic {
            show(g, f, mace, false)
        } else {
            write!(f, "(")?;
            show(g, f, mace, false)?;
            write!(f, ")")
        }
    };
    match fm {
        Formula::True => write!(f, "{}", if mace { "$T" } else { "⊤" }),
        Formula::False => write!(f, "{}", if mace { "$F" } else { "⊥" }),
        Formula::Eq { left, right } => {
            show_term(left, f, mace)?;
            write!(f, " = ")?;
            show_term(right, f, mace)
        }
        Formula::Pred { name, args } => {
            write!(f, "{name}")?;
            if !args.is_empty() {
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    show_term(a, f, mace)?;
                }
                write!(f, ")")?;
            }
            Ok(())
        }
        Formula::Not { body } => match &**body {
            Formula::Eq { left, right } if mace => {
                show_term(left, f, mace)?;
                write!(f, " != ")?;
                show_term(right, f, mace)
            }
            b => {
                write!(f, "{not}")?;
                sub(b, f)
            }
        },
        Formula::And { parts } | Formula::Or { parts } => {
            let sep = if matches!(fm, Formula::And { .. }) { and } else { or };
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    write!(f, "{sep}")?;
                }
                sub(p, f)?;
            }
            Ok(())
        }
        Formula::Implies { premise, conclusion } => {
            sub(premise, f)?;
            write!(f, "{imp}")?;
            sub(conclusion, f)
        }
        Formula::Forall { vars, body } if mace && top && vars.iter().all(|x| mace_var(x) == *x) => {
            // free variables are implicitly universal in Mace4 input
            show(body, f, mace, true)
        }
        Formula::Forall { vars, body } | Formula::Exists { vars, body } => {
            let q = if matches!(fm, Formula::Forall { .. }) { all } else { ex };
            if mace {
                for x in vars {
                    write!(f, "{q} {} ", mace_var(x))?;
                }
                sub(body, f)
            } else {
                write!(f, "{q}{}. ", vars.join(","))?;
                show(body, f, mace, false)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        show(self, f, false, true)
    }
}

impl fmt::Display for FoTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        show_term(self, f, false)
    }
}

struct Mace<'a>(&'a Formula);

impl fmt::Display for Mace<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        show(self.0, f, true, true)
    }
}

pub fn mace4_formula(fm: &Formula) -> String {
    Mace(fm).to_string()
}

/// Mace4 input text.
pub fn export_mace4(th: &FoTheory) -> String {
    let mut out = String::from("formulas(assumptions).\n");
    for a in &th.axioms {
        out.push_str(&format!("{}.  % {}\n", Mace(&a.formula), a.label));
    }
    out.push_str("end_of_list.\n");
    if let Some(g) = &th.goal {
        out.push_str("\nformulas(goals).\n");
        out.push_str(&format!("{}.\n", Mace(g)));
        out.push_str("end_of_list.\n");
    }
    out
}

/// Human-readable listing.
pub fn render_theory(th: &FoTheory) -> String {
    let mut out = String::new();
    for (i, a) in th.axioms.iter().enumerate() {
        out.push_str(&format!("{:>3}. {}    [{}]\n", i + 1, a.formula, a.label));
    }
    if let Some(g) = &th.goal {
        out.push_str(&format!("goal: {g}\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// Clause form

/// A literal of a clause; clause variables are numbered from zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Lit {
    Eq { pos: bool, left: FoTerm, right: FoTerm },
    Pred { pos: bool, name: String, args: Vec<FoTerm> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub vars: Vec<String>,
    pub lits: Vec<Lit>,
    /// Which axiom (or the goal, `None`) produced this clause.
    pub origin: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ClauseSet {
    pub clauses: Vec<Clause>,
    /// Skolem symbols introduced, with arities.
    pub skolems: Vec<(String, usize)>,
}

#[derive(Clone, Debug)]
enum Nnf {
    Lit(Lit),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
    True,
    False,
}

struct Clausifier {
    skolems: Vec<(String, usize)>,
    counter: usize,
}

impl Clausifier {
    fn nnf(&mut self, f: &Formula, pos: bool, univ: &[String], env: &BTreeMap<String, FoTerm>) -> Nnf {
        match f {
            Formula::True => if pos { Nnf::True } else { Nnf::False },
            Formula::False => if pos { Nnf::False } else { Nnf::True },
            Formula::Eq { left, right } => Nnf::Lit(Lit::Eq { pos, left: left.subst(env), right: right.subst(env) }),
            Formula::Pred { name, args } => {
                Nnf::Lit(Lit::Pred { pos, name: name.clone(), args: args.iter().map(|a| a.subst(env)).collect() })
            }
            Formula::Not { body } => self.nnf(body, !pos, univ, env),
            Formula::And { parts } | Formula::Or { parts } => {
                let ps = parts.iter().map(|p| self.nnf(p, pos, univ, env)).collect();
                if matches!(f, Formula::And { .. }) == pos {
                    Nnf::And(ps)
                } else {
                    Nnf::Or(ps)
                }
            }
            Formula::Implies { premise, conclusion } => {
                let a = self.nnf(premise, !pos, univ, env);
                let b = self.nnf(conclusion, pos, univ, env);
                if pos {
                    Nnf::Or(vec![a, b])
                } else {
                    Nnf::And(vec![a, b])
                }
            }
            Formula::Forall { vars, body } | Formula::Exists { vars, body } => {
                let universal = matches!(f, Formula::Forall { .. }) == pos;
                let mut env = env.clone();
                let mut univ = univ.to_vec();
                for x in vars {
                    if universal {
                        self.counter += 1;
                        let fresh = format!("v{}", self.counter);
                        env.insert(x.clone(), FoTerm::Var(fresh.clone()));
                        univ.push(fresh);
                    } else {
                        self.counter += 1;
                        let name = format!("sk{}", self.counter);
                        self.skolems.push((name.clone(), univ.len()));
                        let t = if univ.is_empty() {
                            FoTerm::Const(name)
                        } else {
                            FoTerm::App(name, univ.iter().map(|u| FoTerm::Var(u.clone())).collect())
                        };
                        env.insert(x.clone(), t);
                    }
                }
                self.nnf(body, pos, &univ, &env)
            }
        }
    }
}

/// Conjunctive normal form of an NNF formula, as lists of literals.
fn cnf(n: &Nnf) -> Option<Vec<Vec<Lit>>> {
    // None encodes "true" (no clauses); Some(vec![]) would be empty conjunction too
    match n {
        Nnf::True => Some(Vec::new()),
        Nnf::False => Some(vec![Vec::new()]),
        Nnf::Lit(l) => Some(vec![vec![l.clone()]]),
        Nnf::And(ps) => {
            let mut out = Vec::new();
            for p in ps {
                out.extend(cnf(p)?);
            }
            Some(out)
        }
        Nnf::Or(ps) => {
            let mut acc: Vec<Vec<Lit>> = vec![Vec::new()];
            for p in ps {
                let c = cnf(p)?;
                let mut next = Vec::new();
                for a in &acc {
                    for b in &c {
                        let mut x = a.clone();
                        x.extend(b.iter().cloned());
                        next.push(x);
                    }
                }
                acc = next;
                if acc.len() > 4096 {
                    return None;
                }
            }
            Some(acc)
        }
    }
}

/// Skolemized clause form of the axioms and the negated goal.
pub fn clausify(th: &FoTheory) -> Result<ClauseSet, String> {
    let mut c = Clausifier { skolems: Vec::new(), counter: 0 };
    let mut out = ClauseSet::default();
    let mut items: Vec<(Option<usize>, Formula)> =
        th.axioms.iter().enumerate().map(|(i, a)| (Some(i), a.formula.clone())).collect();
    if let Some(g) = &th.goal {
        items.push((None, Formula::not(g.clone())));
    }
    for (origin, f) in items {
        let free = f.free_vars();
        let closed = Formula::forall(free, f);
        let n = c.nnf(&closed, true, &[], &BTreeMap::new());
        let clauses = cnf(&n).ok_or("clause form too large")?;
        for lits in clauses {
            let mut vs = Vec::new();
            for l in &lits {
                match l {
                    Lit::Eq { left, right, .. } => {
                        left.collect_vars(&mut vs);
                        right.collect_vars(&mut vs);
                    }
                    Lit::Pred { args, .. } => args.iter().for_each(|a| a.collect_vars(&mut vs)),
                }
            }
            out.clauses.push(Clause { vars: vs, lits, origin });
        }
    }
    out.skolems = c.skolems;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_program, parse_term};

    #[test]
    fn data_theory_shape() {
        let ab: BTreeSet<char> = ['a', 'b'].into();
        let th = encode_data_theory(&ab);
        assert_eq!(th.axioms.len(), 7);
        assert_eq!(encode_data_theory(&['a'].into()).axioms.len(), 7);
        assert_eq!(encode_data_theory(&BTreeSet::new()).axioms.len(), 6);
        let text = export_mace4(&th);
        assert!(text.contains("(x * y) * z = x * (y * z)."), "{text}");
        assert!(text.contains("e0 != c_a"));
        assert!(export_mace4(&FoTheory::default()).starts_with("formulas(assumptions).\nend_of_list."));
    }

    #[test]
    fn one_step_goal_of_the_repeated_variable_example() {
        let p = parse_program("f(e.x, e.x) = 'T'; f(e.x, e.y) = 'F':(e.x):(e.y);").unwrap();
        let config = parse_term("f('a':e.q:'a':e.q:'b', e.q:'a':e.q:'b':e.q)").unwrap();
        let g = encode_one_step_goal(&config, &p.rules[0], &p.alphabet).unwrap();
        assert_eq!(g.to_string(), "∃e.q. R(e.q) ∧ 'a':e.q:'a':e.q:'b' = e.q:'a':e.q:'b':e.q");
        let ordered = encode_ordered_goal(&config, &p.rules, 2, &p.alphabet).unwrap();
        assert_eq!(ordered.to_string().matches('¬').count(), 1);
    }

    #[test]
    fn fibonacci_encoding() {
        let p = parse_program(
            "start: Fib(e.n);
             Fib(e.n) = F(e.n, 'b', 'a');
             F(ε, e.xs, e.ys) = (e.xs):(e.ys);
             F('I':e.ns, e.xs, e.ys) = F(e.ns, e.ys, e.xs:e.ys);",
        )
        .unwrap();
        let enc = encode_program_overapprox(&p, &EncodeOptions { project_counters: true }).unwrap();
        assert_eq!(enc.kept["F"], vec![1, 2]);
        let text = render_theory(&enc.theory);
        assert!(text.contains("∧ Reach_F(e.xs, e.ys)) → Reach_F(e.ys, e.xs:e.ys)"), "{text}");
        assert!(text.contains("Reach_F('b', 'a')"), "{text}");
        let full = encode_program_overapprox(&p, &EncodeOptions::default()).unwrap();
        assert_eq!(full.kept["F"], vec![0, 1, 2]);
        let bad = parse_program("f(e.x) = g(h(e.x)); g(e.x) = e.x; h(e.x) = e.x;").unwrap();
        assert_eq!(encode_program_overapprox(&bad, &EncodeOptions::default()).unwrap_err(), EncodeError::UnsupportedShape(1));
    }

    #[test]
    fn clause_form() {
        let th = encode_data_theory(&['a'].into());
        let cs = clausify(&th).unwrap();
        assert!(cs.skolems.is_empty());
        // assoc, 2 units, 1 distinct, 2 base facts, 2 closure
        assert_eq!(cs.clauses.len(), 8);
    }
}
