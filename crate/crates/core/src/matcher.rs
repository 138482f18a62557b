//! Markov matching of ground calls, extended matching of parameterized
//! configurations, and the incomplete no-solution test for word equations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::term::{for_each_match, FreshNames, MatchControl, MatchStats, Substitution, Term, Var, VarKind};

/// A narrowing of the configuration parameters together with the rule
/// variable binding valid under it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Branch {
    pub narrowing: Substitution,
    pub binding: Substitution,
}

/// A branch the restricted solver could not finish.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StuckBranch {
    pub narrowing: Substitution,
    pub binding: Substitution,
    /// Equations over configuration parameters left unsolved.
    pub residual: Vec<(Term, Term)>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum MatchOutcome {
    Solution(Branch),
    Solutions(Vec<Branch>),
    NoSolution(String),
    /// Some branches were solved exactly, others are stuck.
    Unknown { solved: Vec<Branch>, stuck: Vec<StuckBranch> },
}

impl MatchOutcome {
    pub fn is_no_solution(&self) -> bool {
        matches!(self, MatchOutcome::NoSolution(_))
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, MatchOutcome::Unknown { .. })
    }
}

fn as_system(values: &[Term], patterns: &[Term]) -> Vec<(Term, Term)> {
    patterns.iter().cloned().zip(values.iter().cloned()).collect()
}

/// The Markov substitution, if any, counting work in `stats`.
pub fn markov_substitution(values: &[Term], patterns: &[Term], stats: &mut MatchStats) -> Option<Substitution> {
    if values.len() != patterns.len() {
        return None;
    }
    let mut found = None;
    for_each_match(&as_system(values, patterns), stats, &mut |s| {
        found = Some(s.clone());
        MatchControl::Stop
    });
    found
}

/// Every substitution solving `patterns = values`, in Markov order.
pub fn all_substitutions(values: &[Term], patterns: &[Term]) -> Vec<Substitution> {
    if values.len() != patterns.len() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for_each_match(&as_system(values, patterns), &mut MatchStats::default(), &mut |s| {
        out.push(s.clone());
        MatchControl::Continue
    });
    out
}

/// Ground matching under Markov's rule.
pub fn markov_match(values: &[Term], patterns: &[Term]) -> MatchOutcome {
    match markov_substitution(values, patterns, &mut MatchStats::default()) {
        Some(binding) => MatchOutcome::Solution(Branch { narrowing: Substitution::new(), binding }),
        None => MatchOutcome::NoSolution("no substitution matches".into()),
    }
}

// ---------------------------------------------------------------------------
// Extended matching

/// Budget of solver steps before giving up with `Unknown`.
const SOLVER_STEPS: usize = 20_000;

#[derive(Clone)]
struct State {
    /// `(pattern side, configuration side)`; rule variables only ever appear
    /// on the pattern side, and only unbound.
    eqs: Vec<(Vec<Term>, Vec<Term>)>,
    narrowing: Substitution,
    binding: Substitution,
    residual: Vec<(Term, Term)>,
}

enum Res {
    Solved(Branch),
    Stuck(StuckBranch),
}

struct Solver<'a> {
    rule_vars: &'a BTreeSet<Var>,
    fresh: FreshNames,
    steps: usize,
    /// Configuration e-variables on the pattern side may be split.
    split_config: bool,
}

fn is_rule_var(rv: &BTreeSet<Var>, t: &Term) -> bool {
    matches!(t, Term::Var(v) if rv.contains(v))
}

fn is_e(t: &Term) -> bool {
    matches!(t, Term::Var(v) if v.kind == VarKind::E)
}

impl Solver<'_> {
    fn narrow(&self, st: &mut State, v: &Var, value: Term) {
        let one = Substitution::from_pairs([(v.clone(), value)]).expect("narrowing respects sorts");
        for (p, s) in st.eqs.iter_mut() {
            *p = one.apply_unchecked(&Term::from_items(std::mem::take(p))).into_items();
            *s = one.apply_unchecked(&Term::from_items(std::mem::take(s))).into_items();
        }
        for (a, b) in st.residual.iter_mut() {
            *a = one.apply_unchecked(a);
            *b = one.apply_unchecked(b);
        }
        let bound: Vec<(Var, Term)> = st.binding.iter().map(|(k, t)| (k.clone(), one.apply_unchecked(t))).collect();
        st.binding = Substitution::new();
        for (k, t) in bound {
            st.binding.bind_unchecked(k, t);
        }
        st.narrowing = one.compose(&st.narrowing);
        st.narrowing.bind_unchecked(v.clone(), one.apply_unchecked(&Term::Var(v.clone())));
    }

    fn bind(&self, st: &mut State, v: &Var, value: Term) {
        // a rule variable may occur again; later occurrences see the value
        for (p, _) in st.eqs.iter_mut() {
            let mut items = Vec::with_capacity(p.len());
            for t in p.drain(..) {
                match t {
                    Term::Var(ref w) if w == v => items.extend(value.items().iter().cloned()),
                    Term::Paren(_) if t.contains_var(v) => {
                        let one = Substitution::from_pairs([(v.clone(), value.clone())]).unwrap();
                        items.push(one.apply_unchecked(&t));
                    }
                    other => items.push(other),
                }
            }
            *p = items;
        }
        st.binding.bind_unchecked(v.clone(), value);
    }

    fn stuck(&self, st: State, reason: &str) -> Vec<Res> {
        let mut residual = st.residual;
        for (p, s) in st.eqs {
            residual.push((Term::from_items(p), Term::from_items(s)));
        }
        vec![Res::Stuck(StuckBranch { narrowing: st.narrowing, binding: st.binding, residual, reason: reason.into() })]
    }

    /// Splits a configuration e-variable: `e ↦ ε` or `e ↦ item:e'`
    /// (`e'` on the right when `front` is false).
    fn split(&mut self, st: State, v: &Var, kind: VarKind, front: bool) -> Vec<Res> {
        let mut out = Vec::new();
        let mut a = st.clone();
        self.narrow(&mut a, v, Term::Empty);
        out.extend(self.solve(a));
        let item = Term::Var(self.fresh.var(kind));
        let rest = Term::Var(self.fresh.var(VarKind::E));
        let value = if front { Term::seq([item, rest]) } else { Term::seq([rest, item]) };
        let mut b = st;
        self.narrow(&mut b, v, value);
        out.extend(self.solve(b));
        out
    }

    fn solve(&mut self, mut st: State) -> Vec<Res> {
        self.steps += 1;
        if self.steps > SOLVER_STEPS {
            return self.stuck(st, "solver budget exhausted");
        }
        let Some((p, s)) = st.eqs.last().cloned() else {
            if st.residual.is_empty() {
                return vec![Res::Solved(Branch { narrowing: st.narrowing, binding: st.binding })];
            }
            return self.stuck(st, "equation between parameters");
        };
        let rv = self.rule_vars;
        let mut p = p;
        let mut s = s;
        // equations without rule variables: solve exactly what is easy,
        // peel what can be peeled, leave the rest as a residual
        let config_only = !p.iter().any(|t| vars_in(t).iter().any(|v| rv.contains(v)));
        if config_only {
            match config_eq(&p, &s) {
                ConfigEq::Equal => {
                    st.eqs.pop();
                    return self.solve(st);
                }
                ConfigEq::Clash(_) => return Vec::new(),
                ConfigEq::Open(l, r) => {
                    let (l, r) = (l.into_items(), r.into_items());
                    for (x, y) in [(&l, &r), (&r, &l)] {
                        if let [Term::Var(v)] = &x[..] {
                            let occurs = y.iter().any(|t| t.contains_var(v));
                            if v.kind == VarKind::E && !occurs {
                                st.eqs.pop();
                                let value = Term::from_items(y.clone());
                                self.narrow(&mut st, v, value);
                                return self.solve(st);
                            }
                        }
                    }
                    *st.eqs.last_mut().unwrap() = (l.clone(), r.clone());
                    p = l;
                    s = r;
                }
            }
        }
        self.split_config = config_only;
        if p.is_empty() || s.is_empty() {
            let other = if p.is_empty() { &s } else { &p };
            if !other.iter().all(is_e) {
                return Vec::new();
            }
            st.eqs.pop();
            for t in other {
                let Term::Var(v) = t else { unreachable!() };
                if rv.contains(v) {
                    self.bind(&mut st, v, Term::Empty);
                } else {
                    self.narrow(&mut st, v, Term::Empty);
                }
            }
            return self.solve(st);
        }
        for front in [true, false] {
            let (a, b) = if front { (&p[0], &s[0]) } else { (p.last().unwrap(), s.last().unwrap()) };
            match self.peel(&mut st, a, b, front) {
                Peel::Consumed(inner) => {
                    let (mut p, mut s) = st.eqs.pop().unwrap();
                    if front {
                        p.remove(0);
                        s.remove(0);
                    } else {
                        p.pop();
                        s.pop();
                    }
                    st.eqs.push((p, s));
                    if let Some(eq) = inner {
                        st.eqs.push(eq);
                    }
                    return self.solve(st);
                }
                Peel::Fail => return Vec::new(),
                Peel::Split(v, kind) => {
                    // between parameters, splitting against an open side need not terminate
                    let other = if s.iter().any(|t| t.contains_var(&v)) { &p } else { &s };
                    if !(config_only && other.iter().any(is_e)) {
                        return self.split(st, &v, kind, front);
                    }
                }
                Peel::Redo => return self.solve(st),
                Peel::Blocked => {}
            }
        }
        st.eqs.pop();
        if config_only {
            st.residual.push((Term::from_items(p), Term::from_items(s)));
            return self.solve(st);
        }
        self.open(st, p, s)
    }

    /// Both ends of the pattern are unbound rule e-variables.
    fn open(&mut self, st: State, p: Vec<Term>, s: Vec<Term>) -> Vec<Res> {
        let rv = self.rule_vars;
        if p.len() == 1 && is_rule_var(rv, &p[0]) {
            let Term::Var(v) = &p[0] else { unreachable!() };
            let mut st = st;
            self.bind(&mut st, v, Term::from_items(s));
            return self.solve(st);
        }
        if p.iter().all(|t| !is_e(t)) || !is_rule_var(rv, &p[0]) {
            let mut st = st;
            st.eqs.push((p, s));
            return self.stuck(st, "unsupported equation shape");
        }
        if s.iter().any(is_e) {
            let mut st = st;
            st.eqs.push((p, s));
            return self.stuck(st, "open variables on both sides");
        }
        // the configuration side has fixed length: Markov enumeration
        let Term::Var(v) = &p[0] else { unreachable!() };
        for len in 0..=s.len() {
            let mut a = st.clone();
            self.bind(&mut a, v, Term::from_items(s[..len].to_vec()));
            a.eqs.push((p[1..].to_vec(), s[len..].to_vec()));
            // bind rewrote earlier eqs but not this one: apply manually
            let last = a.eqs.pop().unwrap();
            let rewritten: Vec<Term> = last
                .0
                .into_iter()
                .flat_map(|t| match t {
                    Term::Var(ref w) if w == v => s[..len].to_vec(),
                    other => vec![other],
                })
                .collect();
            a.eqs.push((rewritten, last.1));
            let res = self.solve(a);
            if res.is_empty() {
                continue;
            }
            let unconditional = res.iter().all(|r| match r {
                Res::Solved(b) => b.narrowing == st.narrowing,
                Res::Stuck(_) => false,
            });
            if unconditional && res.len() == 1 {
                return res;
            }
            let mut st = st;
            st.eqs.push((p, s));
            return self.stuck(st, "Markov choice depends on parameters");
        }
        Vec::new()
    }

    fn peel(&mut self, st: &mut State, a: &Term, b: &Term, front: bool) -> Peel {
        let rv = self.rule_vars;
        match a {
            Term::Var(v) if rv.contains(v) => match v.kind {
                VarKind::E => Peel::Blocked,
                VarKind::S => match b {
                    Term::Char(_) => {
                        self.bind(st, v, b.clone());
                        Peel::Consumed(None)
                    }
                    Term::Var(w) => match w.kind {
                        VarKind::S => {
                            self.bind(st, v, b.clone());
                            Peel::Consumed(None)
                        }
                        VarKind::T => {
                            let fresh = Term::Var(self.fresh.var(VarKind::S));
                            self.narrow(st, w, fresh);
                            Peel::Redo
                        }
                        VarKind::E => Peel::Split(w.clone(), VarKind::S),
                    },
                    _ => Peel::Fail,
                },
                VarKind::T => match b {
                    Term::Char(_) | Term::Paren(_) => {
                        self.bind(st, v, b.clone());
                        Peel::Consumed(None)
                    }
                    Term::Var(w) if w.kind != VarKind::E => {
                        self.bind(st, v, b.clone());
                        Peel::Consumed(None)
                    }
                    Term::Var(w) => Peel::Split(w.clone(), VarKind::T),
                    _ => Peel::Fail,
                },
            },
            Term::Char(c) => match b {
                Term::Char(d) if c == d => Peel::Consumed(None),
                Term::Char(_) | Term::Paren(_) => Peel::Fail,
                Term::Var(w) if w.kind == VarKind::E => Peel::Split(w.clone(), VarKind::S),
                Term::Var(w) => {
                    self.narrow(st, w, a.clone());
                    Peel::Redo
                }
                _ => Peel::Blocked,
            },
            Term::Paren(pi) => match b {
                Term::Paren(si) => Peel::Consumed(Some((pi.items().to_vec(), si.items().to_vec()))),
                Term::Char(_) => Peel::Fail,
                Term::Var(w) => match w.kind {
                    VarKind::S => Peel::Fail,
                    VarKind::T => {
                        let inner = Term::Var(self.fresh.var(VarKind::E));
                        self.narrow(st, w, Term::paren(inner));
                        Peel::Redo
                    }
                    VarKind::E => Peel::Split(w.clone(), VarKind::T),
                },
                _ => Peel::Blocked,
            },
            // configuration items reached through a bound rule variable
            Term::Var(v) => {
                if a == b {
                    return Peel::Consumed(None);
                }
                let _ = front;
                match (v.kind, b) {
                    (VarKind::E, Term::Char(_)) if self.split_config => Peel::Split(v.clone(), VarKind::S),
                    (VarKind::E, Term::Paren(_)) if self.split_config => Peel::Split(v.clone(), VarKind::T),
                    (VarKind::E, _) => Peel::Blocked,
                    (_, Term::Char(_)) => {
                        self.narrow(st, v, b.clone());
                        Peel::Redo
                    }
                    _ => Peel::Blocked,
                }
            }
            _ => Peel::Blocked,
        }
    }
}

enum Peel {
    Consumed(Option<(Vec<Term>, Vec<Term>)>),
    Fail,
    Split(Var, VarKind),
    /// State changed by a narrowing; restart on the rewritten equation.
    Redo,
    Blocked,
}

fn vars_in(t: &Term) -> Vec<Var> {
    crate::term::vars(t).order
}

enum ConfigEq {
    Equal,
    Clash(String),
    Open(Term, Term),
}

fn rigid_clash(a: &Term, b: &Term) -> bool {
    match (a, b) {
        (Term::Char(c), Term::Char(d)) => c != d,
        (Term::Char(_), Term::Paren(_)) | (Term::Paren(_), Term::Char(_)) => true,
        (Term::Var(v), Term::Paren(_)) | (Term::Paren(_), Term::Var(v)) => v.kind == VarKind::S,
        (Term::Paren(x), Term::Paren(y)) => matches!(config_eq(x.items(), y.items()), ConfigEq::Clash(_)),
        _ => false,
    }
}

/// Syntactic simplification of an equation between two configuration-side
/// sequences: strips equal ends and detects rigid clashes.
fn config_eq(l: &[Term], r: &[Term]) -> ConfigEq {
    let (mut i, mut j) = (0, 0);
    let (mut li, mut ri) = (l.len(), r.len());
    while i < li && j < ri && l[i] == r[j] {
        i += 1;
        j += 1;
    }
    while li > i && ri > j && l[li - 1] == r[ri - 1] {
        li -= 1;
        ri -= 1;
    }
    let (l, r) = (&l[i..li], &r[j..ri]);
    if l.is_empty() && r.is_empty() {
        return ConfigEq::Equal;
    }
    if let (Some(a), Some(b)) = (l.first(), r.first()) {
        if rigid_clash(a, b) {
            return ConfigEq::Clash("clash at the left end".into());
        }
    }
    if let (Some(a), Some(b)) = (l.last(), r.last()) {
        if rigid_clash(a, b) {
            return ConfigEq::Clash("clash at the right end".into());
        }
    }
    let fixed = |s: &[Term]| !s.iter().any(is_e);
    if fixed(l) && fixed(r) && l.len() != r.len() {
        return ConfigEq::Clash("length mismatch".into());
    }
    if (l.is_empty() && !r.iter().all(is_e)) || (r.is_empty() && !l.iter().all(is_e)) {
        return ConfigEq::Clash("non-empty side against ε".into());
    }
    if l.iter().chain(r).all(Term::is_ground) {
        return ConfigEq::Clash("distinct data".into());
    }
    ConfigEq::Open(Term::from_items(l.to_vec()), Term::from_items(r.to_vec()))
}

/// Matches a parameterized call against a rule left-hand side whose
/// variables are disjoint from the configuration's.
pub fn extended_match(config: &Term, lhs: &Term) -> MatchOutcome {
    let (Term::Call(f, cargs), Term::Call(g, pargs)) = (config, lhs) else {
        return MatchOutcome::Unknown {
            solved: Vec::new(),
            stuck: vec![StuckBranch {
                narrowing: Substitution::new(),
                binding: Substitution::new(),
                residual: Vec::new(),
                reason: "not a call".into(),
            }],
        };
    };
    if f != g || cargs.len() != pargs.len() {
        return MatchOutcome::NoSolution("different function".into());
    }
    if !cargs.iter().all(Term::is_passive) {
        return MatchOutcome::Unknown {
            solved: Vec::new(),
            stuck: vec![StuckBranch {
                narrowing: Substitution::new(),
                binding: Substitution::new(),
                residual: Vec::new(),
                reason: "active argument".into(),
            }],
        };
    }
    let rule_vars: BTreeSet<Var> = crate::term::vars(lhs).order.into_iter().collect();
    let config_vars = crate::term::vars(config);
    let taken: BTreeSet<String> = config_vars.order.iter().chain(&rule_vars).map(|v| v.name.clone()).collect();
    let mut prefix = String::from("n");
    while taken.iter().any(|n| n.starts_with(&prefix)) {
        prefix.push('n');
    }
    let mut solver = Solver { rule_vars: &rule_vars, fresh: FreshNames::new(prefix), steps: 0, split_config: false };
    // equations are popped from the back: push the last argument first
    let eqs = pargs.iter().zip(cargs).rev().map(|(p, c)| (p.items().to_vec(), c.items().to_vec())).collect();
    let st = State { eqs, narrowing: Substitution::new(), binding: Substitution::new(), residual: Vec::new() };
    let results = solver.solve(st);
    let mut solved = Vec::new();
    let mut stuck = Vec::new();
    for r in results {
        match r {
            Res::Solved(b) => solved.push(tidy(b, &config_vars.order)),
            Res::Stuck(s) => stuck.push(s),
        }
    }
    if !stuck.is_empty() {
        return MatchOutcome::Unknown { solved, stuck };
    }
    match solved.len() {
        0 => MatchOutcome::NoSolution("no object instance matches".into()),
        1 => MatchOutcome::Solution(solved.pop().unwrap()),
        _ => MatchOutcome::Solutions(solved),
    }
}

/// Drops identity bindings from the narrowing and restricts it to the
/// configuration's own variables.
fn tidy(b: Branch, config_vars: &[Var]) -> Branch {
    let mut n = Substitution::new();
    for (v, t) in b.narrowing.iter() {
        if config_vars.contains(v) && t != &Term::Var(v.clone()) {
            n.bind_unchecked(v.clone(), t.clone());
        }
    }
    Branch { narrowing: n, binding: b.binding }
}

// ---------------------------------------------------------------------------
// No-solution test

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// A rigid clash after stripping equal ends.
    Syntactic { reason: String },
    /// The per-letter occurrence counts have no solution in naturals.
    Parikh { letter: String },
    /// The count system has finitely many solutions and none of their
    /// instantiations solves the equations.
    Instantiation { candidates: usize },
    /// A finite model of the data theory falsifying solvability.
    Model { size: usize, model: crate::finder::FiniteModel },
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::Syntactic { reason } => write!(f, "syntactic: {reason}"),
            Certificate::Parikh { letter } => write!(f, "occurrence counts of {letter} cannot balance"),
            Certificate::Instantiation { candidates } => {
                write!(f, "all {candidates} count-compatible instantiations fail")
            }
            Certificate::Model { size, .. } => write!(f, "countermodel of size {size}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum NoSolVerdict {
    Inconsistent(Certificate),
    Unknown { reason: String },
}

impl NoSolVerdict {
    pub fn is_inconsistent(&self) -> bool {
        matches!(self, NoSolVerdict::Inconsistent(_))
    }
}

#[derive(Clone, Debug)]
pub struct NoSolBudget {
    /// Skip the model finder entirely.
    pub use_fcm: bool,
    pub fcm: crate::finder::FinderOptions,
}

impl Default for NoSolBudget {
    fn default() -> Self {
        NoSolBudget {
            use_fcm: true,
            fcm: crate::finder::FinderOptions {
                deadline: std::time::Duration::from_secs(10),
                ..Default::default()
            },
        }
    }
}

const LATTICE_LIMIT: usize = 64;
const INSTANCE_LIMIT: usize = 200_000;

/// Tries to prove that a system of equations between passive terms has no
/// object solution. Only `Inconsistent` is a proof.
pub fn no_solution_check(eqs: &[(Term, Term)], budget: &NoSolBudget) -> NoSolVerdict {
    if let Some(v) = cheap_no_solution(eqs) {
        return v;
    }
    if !budget.use_fcm {
        return NoSolVerdict::Unknown { reason: "counting and instantiation inconclusive".into() };
    }
    let theory = crate::fol::encode_equations_goal(eqs);
    match crate::finder::find_model(&theory, &budget.fcm) {
        Ok(m) => NoSolVerdict::Inconsistent(Certificate::Model { size: m.size, model: m }),
        Err(e) => NoSolVerdict::Unknown { reason: e.to_string() },
    }
}

/// The syntactic and counting strategies only.
pub fn cheap_no_solution(eqs: &[(Term, Term)]) -> Option<NoSolVerdict> {
    for (l, r) in eqs {
        if let ConfigEq::Clash(reason) = config_eq(l.items(), r.items()) {
            return Some(NoSolVerdict::Inconsistent(Certificate::Syntactic { reason }));
        }
    }
    match parikh(eqs) {
        Parikh::Unsat(letter) => Some(NoSolVerdict::Inconsistent(Certificate::Parikh { letter })),
        Parikh::Finite(points) => instantiate(eqs, &points),
        Parikh::Unbounded => None,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Letter {
    Char(char),
    Paren,
    Other,
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Letter::Char(c) => write!(f, "'{c}'"),
            Letter::Paren => write!(f, "()"),
            Letter::Other => write!(f, "other characters"),
        }
    }
}

enum Parikh {
    Unsat(String),
    /// Count vectors: var → letter → count.
    Finite(Vec<BTreeMap<Var, BTreeMap<Letter, usize>>>),
    Unbounded,
}

fn count_side(t: &Term, sign: i64, coef: &mut BTreeMap<Var, i64>, konst: &mut BTreeMap<Letter, i64>) -> bool {
    for item in t.items() {
        match item {
            Term::Char(c) => *konst.entry(Letter::Char(*c)).or_default() += sign,
            Term::Paren(_) => *konst.entry(Letter::Paren).or_default() += sign,
            Term::Var(v) => *coef.entry(v.clone()).or_default() += sign,
            _ => return false,
        }
    }
    true
}

fn parikh(eqs: &[(Term, Term)]) -> Parikh {
    let mut letters: BTreeSet<Letter> = [Letter::Other].into();
    // per equation: coefficient (left − right) per var, constant (right − left)
    let mut rows = Vec::new();
    let mut all_vars: BTreeSet<Var> = BTreeSet::new();
    for (l, r) in eqs {
        let mut coef = BTreeMap::new();
        let mut konst = BTreeMap::new();
        if !count_side(l, 1, &mut coef, &mut konst) || !count_side(r, -1, &mut coef, &mut konst) {
            return Parikh::Unbounded;
        }
        let konst: BTreeMap<Letter, i64> = konst.into_iter().map(|(k, v)| (k, -v)).collect();
        letters.extend(konst.keys().copied());
        all_vars.extend(coef.keys().cloned());
        rows.push((coef, konst));
    }
    for (l, r) in eqs {
        let mut cs = BTreeSet::new();
        l.chars(&mut cs);
        r.chars(&mut cs);
        letters.extend(cs.into_iter().map(Letter::Char));
    }
    // unsatisfiability: a letter equation whose coefficients all share a sign
    // opposite to the constant, or whose gcd does not divide it
    let mut finite = true;
    let mut bounds: BTreeMap<(Var, Letter), usize> = BTreeMap::new();
    for (coef, konst) in &rows {
        for &ell in &letters {
            let c = konst.get(&ell).copied().unwrap_or(0);
            let nz: Vec<(&Var, i64)> = coef.iter().filter(|(_, &d)| d != 0).map(|(v, &d)| (v, d)).collect();
            if nz.is_empty() {
                if c != 0 {
                    return Parikh::Unsat(ell.to_string());
                }
                continue;
            }
            let g = nz.iter().fold(0i64, |g, (_, d)| gcd(g, d.abs()));
            if c % g != 0 && ell != Letter::Other {
                return Parikh::Unsat(ell.to_string());
            }
            let all_pos = nz.iter().all(|(_, d)| *d > 0);
            let all_neg = nz.iter().all(|(_, d)| *d < 0);
            if (all_pos && c < 0) || (all_neg && c > 0) {
                return Parikh::Unsat(ell.to_string());
            }
            if all_pos || all_neg {
                for (v, d) in &nz {
                    let b = (c.abs() / d.abs()) as usize;
                    let e = bounds.entry(((*v).clone(), ell)).or_insert(b);
                    *e = (*e).min(b);
                }
            }
        }
        for v in coef.iter().filter(|(_, &d)| d == 0).map(|(v, _)| v) {
            if v.kind == VarKind::E {
                let _ = v;
            }
        }
    }
    for v in &all_vars {
        if v.kind != VarKind::E {
            continue;
        }
        for &ell in &letters {
            if !bounds.contains_key(&(v.clone(), ell)) {
                finite = false;
            }
        }
    }
    if !finite {
        return Parikh::Unbounded;
    }
    // enumerate lattice points
    let vars: Vec<Var> = all_vars.into_iter().collect();
    let letters: Vec<Letter> = letters.into_iter().collect();
    let mut points = Vec::new();
    let mut cur: BTreeMap<Var, BTreeMap<Letter, usize>> = BTreeMap::new();
    let ok = enumerate_points(&vars, 0, &letters, &bounds, &rows, &mut cur, &mut points);
    if !ok {
        return Parikh::Unbounded;
    }
    if points.is_empty() {
        return Parikh::Unsat("the combined count system".into());
    }
    Parikh::Finite(points)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

type Point = BTreeMap<Var, BTreeMap<Letter, usize>>;

fn enumerate_points(
    vars: &[Var],
    i: usize,
    letters: &[Letter],
    bounds: &BTreeMap<(Var, Letter), usize>,
    rows: &[(BTreeMap<Var, i64>, BTreeMap<Letter, i64>)],
    cur: &mut Point,
    out: &mut Vec<Point>,
) -> bool {
    if i == vars.len() {
        let balanced = rows.iter().all(|(coef, konst)| {
            letters.iter().all(|ell| {
                let lhs: i64 = coef.iter().map(|(v, d)| d * cur[v].get(ell).copied().unwrap_or(0) as i64).sum();
                lhs == konst.get(ell).copied().unwrap_or(0)
            })
        });
        if balanced {
            out.push(cur.clone());
        }
        return out.len() <= LATTICE_LIMIT;
    }
    let v = &vars[i];
    let choices: Vec<BTreeMap<Letter, usize>> = match v.kind {
        // exactly one item
        VarKind::S => letters.iter().filter(|l| **l != Letter::Paren).map(|l| [(*l, 1)].into()).collect(),
        VarKind::T => letters.iter().map(|l| [(*l, 1)].into()).collect(),
        VarKind::E => {
            let mut acc: Vec<BTreeMap<Letter, usize>> = vec![BTreeMap::new()];
            for ell in letters {
                let b = bounds[&(v.clone(), *ell)];
                let mut next = Vec::new();
                for m in &acc {
                    for k in 0..=b {
                        let mut m = m.clone();
                        if k > 0 {
                            m.insert(*ell, k);
                        }
                        next.push(m);
                    }
                }
                acc = next;
                if acc.len() > 10_000 {
                    return false;
                }
            }
            acc
        }
    };
    for c in choices {
        cur.insert(v.clone(), c);
        if !enumerate_points(vars, i + 1, letters, bounds, rows, cur, out) {
            return false;
        }
    }
    cur.remove(v);
    true
}

/// A character not occurring in the equations, standing for all of them.
const OTHER: char = '\u{E000}';

fn instantiate(eqs: &[(Term, Term)], points: &[Point]) -> Option<NoSolVerdict> {
    // the top-level paren homomorphism is only sound without paren constants
    let has_paren_const = eqs.iter().any(|(l, r)| l.items().iter().chain(r.items()).any(|t| matches!(t, Term::Paren(_))));
    let mut tested = 0usize;
    for pt in points {
        if has_paren_const && pt.values().any(|m| m.contains_key(&Letter::Paren)) {
            return None;
        }
        let vars: Vec<(&Var, Vec<Term>)> = pt
            .iter()
            .map(|(v, m)| {
                let mut items = Vec::new();
                for (l, k) in m {
                    let t = match l {
                        Letter::Char(c) => Term::Char(*c),
                        Letter::Paren => Term::paren(Term::Empty),
                        Letter::Other => Term::Char(OTHER),
                    };
                    items.extend(std::iter::repeat_n(t, *k));
                }
                (v, items)
            })
            .collect();
        let mut choice: Vec<Vec<Term>> = Vec::new();
        let mut found = false;
        if !arrangements(&vars, 0, &mut choice, &mut tested, &mut |words| {
            let sub = Substitution::from_pairs(
                vars.iter().zip(words).map(|((v, _), w)| ((*v).clone(), Term::from_items(w.clone()))),
            )
            .expect("counts respect sorts");
            let solved = eqs.iter().all(|(l, r)| sub.apply_unchecked(l) == sub.apply_unchecked(r));
            found |= solved;
            solved
        }) {
            return None;
        }
        if found {
            return None;
        }
    }
    Some(NoSolVerdict::Inconsistent(Certificate::Instantiation { candidates: tested }))
}

/// Enumerates every ordering of each variable's letter multiset; stops
/// early when `f` returns true. Returns false when the limit is hit.
fn arrangements(
    vars: &[(&Var, Vec<Term>)],
    i: usize,
    choice: &mut Vec<Vec<Term>>,
    tested: &mut usize,
    f: &mut dyn FnMut(&[Vec<Term>]) -> bool,
) -> bool {
    if i == vars.len() {
        *tested += 1;
        if *tested > INSTANCE_LIMIT {
            return false;
        }
        f(choice);
        return true;
    }
    let mut items = vars[i].1.clone();
    items.sort();
    loop {
        choice.push(items.clone());
        let ok = arrangements(vars, i + 1, choice, tested, f);
        choice.pop();
        if !ok {
            return false;
        }
        if !next_permutation(&mut items) {
            return true;
        }
    }
}

fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn args(s: &str) -> Vec<Term> {
        match t(s) {
            Term::Call(_, a) => a,
            _ => panic!(),
        }
    }

    #[test]
    fn markov_examples() {
        let MatchOutcome::Solution(b) = markov_match(&args("f('abcabc', 'bc')"), &args("f(e.x:e.w:e.y, e.w)")) else {
            panic!()
        };
        assert_eq!(b.binding.get(&Var::e("x")), Some(&t("'a'")));
        assert_eq!(b.binding.get(&Var::e("w")), Some(&t("'bc'")));
        assert_eq!(b.binding.get(&Var::e("y")), Some(&t("'abc'")));
        let MatchOutcome::Solution(b) = markov_match(&args("f('abacad')"), &args("f(e.x:'a':e.y:'a':e.z)")) else {
            panic!()
        };
        assert_eq!(b.binding.get(&Var::e("x")), Some(&Term::Empty));
        assert_eq!(b.binding.get(&Var::e("y")), Some(&t("'b'")));
        assert_eq!(b.binding.get(&Var::e("z")), Some(&t("'cad'")));
        assert!(markov_match(&[t("'ab'")], &[t("'b':e.y")]).is_no_solution());
    }

    #[test]
    fn peel_recursive_rule() {
        let out = extended_match(&t("F(e.ns, e.xs, e.ys)"), &t("F('I':e.ns1, e.xs1, e.ys1)"));
        let MatchOutcome::Solution(b) = out else { panic!("{out:?}") };
        assert_eq!(b.narrowing.len(), 1);
        let v = b.narrowing.get(&Var::e("ns")).unwrap();
        assert_eq!(v.items()[0], Term::ch('I'));
        assert_eq!(b.binding.get(&Var::e("xs1")), Some(&t("e.xs")));
        assert_eq!(b.binding.get(&Var::e("ns1")), Some(&Term::from_items(v.items()[1..].to_vec())));
        let out = extended_match(&t("F(e.ns, e.xs, e.ys)"), &t("F(ε, e.xs1, e.ys1)"));
        let MatchOutcome::Solution(b) = out else { panic!("{out:?}") };
        assert_eq!(b.narrowing.get(&Var::e("ns")), Some(&Term::Empty));
    }

    #[test]
    fn suffix_and_prefix_narrowing() {
        let out = extended_match(&t("B((e.xs):(e.ys))"), &t("B((e.a:'b'):('b':e.c))"));
        let MatchOutcome::Solution(b) = out else { panic!("{out:?}") };
        assert_eq!(b.narrowing.len(), 2);
        let xs = b.narrowing.get(&Var::e("xs")).unwrap();
        assert_eq!(xs.items().last(), Some(&Term::ch('b')));
        let ys = b.narrowing.get(&Var::e("ys")).unwrap();
        assert_eq!(ys.items().first(), Some(&Term::ch('b')));
    }

    #[test]
    fn repeated_variables() {
        let out = extended_match(&t("f('a':e.q, e.q:'a')"), &t("f(e.x, e.x)"));
        assert!(out.is_unknown(), "{out:?}");
        let out = extended_match(&t("f('a':e.q:'a':e.q:'b', e.q:'a':e.q:'b':e.q)"), &t("f(e.x, e.x)"));
        let MatchOutcome::Unknown { stuck, .. } = out else { panic!() };
        let v = cheap_no_solution(&stuck[0].residual);
        assert!(matches!(v, Some(NoSolVerdict::Inconsistent(Certificate::Instantiation { .. }))), "{v:?}");
        let out = extended_match(&t("g(e.ps, t.x, t.x)"), &t("g(ε, ('h':e.xs), 'A')"));
        assert!(out.is_no_solution(), "{out:?}");
        let out = extended_match(&t("g(e.ps, t.x, t.x)"), &t("g('c':e.p, ('h':e.xs), ('h':e.ys))"));
        let MatchOutcome::Solution(b) = out else { panic!("{out:?}") };
        assert_eq!(b.binding.get(&Var::e("ys")), b.binding.get(&Var::e("xs")));
    }

    #[test]
    fn counting_checks() {
        let q = |s: &str| t(s);
        let v = cheap_no_solution(&[(q("'a':e.q:'a':e.q:'b'"), q("e.q:'a':e.q:'b':e.q"))]);
        assert!(v.unwrap().is_inconsistent());
        assert!(cheap_no_solution(&[(q("'a':e.q"), q("e.q:'a'"))]).is_none());
        assert!(cheap_no_solution(&[(q("'a'"), q("'b':e.z"))]).unwrap().is_inconsistent());
        assert!(cheap_no_solution(&[(q("e.z:'a'"), q("'b':e.z"))]).unwrap().is_inconsistent());
    }
}
