//! Finite model search and model checking.
//!
//! Theories built on the data monoid are searched as generated algebras: a
//! model of a universal theory restricts to the substructure generated by its
//! constants, so it suffices to enumerate right Cayley graphs of monoids
//! generated by the characters and by parenthesized elements. Program
//! predicates are then fixed to their least fixpoint, which is the best
//! choice for falsifying a positive goal. Other theories go to a plain
//! MACE-style cell search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fol::{
    char_const, clausify, encode_data_theory, AxiomKind, Clause, FoTerm, FoTheory, Formula, Lit, CONCAT, DATA, EMPTY,
    PAREN,
};
use crate::term::Term;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub arity: usize,
    /// Row-major over argument tuples.
    pub values: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub arity: usize,
    pub holds: Vec<bool>,
}

/// A finite interpretation over `0..size`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteModel {
    pub size: usize,
    pub constants: BTreeMap<String, usize>,
    pub functions: BTreeMap<String, Table>,
    pub relations: BTreeMap<String, Relation>,
}

fn tuple_index(args: &[usize], n: usize) -> usize {
    args.iter().fold(0, |acc, &a| acc * n + a)
}

fn tuple_of(mut idx: usize, arity: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; arity];
    for slot in out.iter_mut().rev() {
        *slot = idx % n;
        idx /= n;
    }
    out
}

impl FiniteModel {
    pub fn apply(&self, f: &str, args: &[usize]) -> Option<usize> {
        if args.is_empty() {
            if let Some(&c) = self.constants.get(f) {
                return Some(c);
            }
        }
        let t = self.functions.get(f).filter(|t| t.arity == args.len())?;
        t.values.get(tuple_index(args, self.size)).copied()
    }

    pub fn holds(&self, p: &str, args: &[usize]) -> Option<bool> {
        let r = self.relations.get(p).filter(|r| r.arity == args.len())?;
        r.holds.get(tuple_index(args, self.size)).copied()
    }

    pub fn eval(&self, t: &FoTerm, env: &[(String, usize)]) -> Result<usize, String> {
        match t {
            FoTerm::Var(x) => {
                env.iter().rev().find(|(n, _)| n == x).map(|p| p.1).ok_or_else(|| format!("unbound variable {x}"))
            }
            FoTerm::Const(c) => self.constants.get(c).copied().ok_or_else(|| format!("uninterpreted constant {c}")),
            FoTerm::App(f, args) => {
                let vals = args.iter().map(|a| self.eval(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.apply(f, &vals).ok_or_else(|| format!("uninterpreted function {f}/{}", args.len()))
            }
        }
    }

    /// Truth of `f`, free variables read universally.
    pub fn satisfies(&self, f: &Formula) -> Result<bool, String> {
        let closed = Formula::forall(f.free_vars(), f.clone());
        self.sat(&closed, &mut Vec::new())
    }

    fn sat(&self, f: &Formula, env: &mut Vec<(String, usize)>) -> Result<bool, String> {
        Ok(match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Eq { left, right } => self.eval(left, env)? == self.eval(right, env)?,
            Formula::Pred { name, args } => {
                let vals = args.iter().map(|a| self.eval(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.holds(name, &vals).ok_or_else(|| format!("uninterpreted predicate {name}/{}", args.len()))?
            }
            Formula::Not { body } => !self.sat(body, env)?,
            Formula::And { parts } => {
                for p in parts {
                    if !self.sat(p, env)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or { parts } => {
                for p in parts {
                    if self.sat(p, env)? {
                        return Ok(true);
                    }
                }
                false
            }
            Formula::Implies { premise, conclusion } => !self.sat(premise, env)? || self.sat(conclusion, env)?,
            Formula::Forall { vars, body } => self.quant(vars, body, env, true)?,
            Formula::Exists { vars, body } => self.quant(vars, body, env, false)?,
        })
    }

    fn quant(&self, vars: &[String], body: &Formula, env: &mut Vec<(String, usize)>, universal: bool) -> Result<bool, String> {
        let Some((x, rest)) = vars.split_first() else {
            return self.sat(body, env);
        };
        for e in 0..self.size {
            env.push((x.clone(), e));
            let r = self.quant(rest, body, env, universal);
            env.pop();
            if r? != universal {
                return Ok(!universal);
            }
        }
        Ok(universal)
    }

    /// Mace4-style listing of the interpretation.
    pub fn render(&self) -> String {
        let mut out = format!("interpretation( {}, [number=1], [\n", self.size);
        let mut items = Vec::new();
        for (c, v) in &self.constants {
            items.push(format!("    function({c}, [{v}])"));
        }
        for (f, t) in &self.functions {
            let args = vec!["_"; t.arity].join(",");
            let vals: Vec<String> = t.values.iter().map(|v| v.to_string()).collect();
            items.push(format!("    function({f}({args}), [{}])", vals.join(",")));
        }
        for (p, r) in &self.relations {
            let vals: Vec<&str> = r.holds.iter().map(|&b| if b { "1" } else { "0" }).collect();
            if r.arity == 0 {
                items.push(format!("    relation({p}, [{}])", vals.join(",")));
            } else {
                let args = vec!["_"; r.arity].join(",");
                items.push(format!("    relation({p}({args}), [{}])", vals.join(",")));
            }
        }
        out.push_str(&items.join(",\n"));
        out.push_str("\n]).\n");
        out
    }
}

/// Checks every axiom and that the goal is false.
pub fn check_model(m: &FiniteModel, th: &FoTheory) -> Result<(), String> {
    for a in &th.axioms {
        if !m.satisfies(&a.formula)? {
            return Err(format!("axiom `{}` fails", a.label));
        }
    }
    if let Some(g) = &th.goal {
        if m.satisfies(g)? {
            return Err("goal holds".into());
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FinderOptions {
    pub min_size: usize,
    pub max_size: usize,
    pub deadline: Duration,
    /// Split each size's search tree across the rayon pool.
    pub parallel: bool,
    /// Use the plain cell search even for data-monoid theories.
    pub force_generic: bool,
}

impl Default for FinderOptions {
    fn default() -> Self {
        FinderOptions {
            min_size: 1,
            max_size: 16,
            deadline: Duration::from_secs(120),
            parallel: cfg!(feature = "parallel"),
            force_generic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FinderError {
    #[error("deadline exceeded while searching size {size}")]
    DeadlineExceeded { size: usize },
    #[error("no model of size {min}..={max}")]
    ExhaustedSizes { min: usize, max: usize },
    #[error("unsupported theory: {0}")]
    Unsupported(String),
    #[error("internal error: found model fails verification: {0}")]
    Unverified(String),
}

/// Searches sizes in increasing order and returns the first model found,
/// after re-checking it against the theory.
pub fn find_model(th: &FoTheory, opts: &FinderOptions) -> Result<FiniteModel, FinderError> {
    let start = Instant::now();
    let deadline = start + opts.deadline;
    let spec = if opts.force_generic { None } else { CayleySpec::compile(th) };
    let min = opts.min_size.max(1);
    for n in min..=opts.max_size {
        let found = match &spec {
            Some(spec) => spec.search(n, deadline, opts.parallel),
            None => generic_search(th, n, deadline)?,
        };
        match found {
            Outcome::Found(m) => {
                check_model(&m, th).map_err(FinderError::Unverified)?;
                return Ok(m);
            }
            Outcome::Exhausted => {}
            Outcome::Aborted => return Err(FinderError::DeadlineExceeded { size: n }),
        }
    }
    Err(FinderError::ExhaustedSizes { min, max: opts.max_size })
}

enum Outcome {
    Found(FiniteModel),
    Exhausted,
    Aborted,
}

struct Control<'a> {
    deadline: Instant,
    /// Index of the lowest frontier task that found a model.
    best: &'a AtomicUsize,
    index: usize,
    nodes: u64,
    aborted: bool,
}

impl Control<'_> {
    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes.is_multiple_of(128) && Instant::now() > self.deadline {
            self.aborted = true;
        }
        if self.best.load(Ordering::Relaxed) < self.index {
            self.aborted = true;
        }
        !self.aborted
    }
}

// ---------------------------------------------------------------------------
// Cayley-graph search for data-monoid theories

const UNDEF: u8 = u8::MAX;

#[derive(Clone, Debug)]
enum CTerm {
    Var(usize),
    Elem(u8),
    Mul(Box<CTerm>, Box<CTerm>),
    Paren(Box<CTerm>),
}

impl CTerm {
    fn vars(&self, out: &mut Vec<usize>) {
        match self {
            CTerm::Var(v) => {
                if !out.contains(v) {
                    out.push(*v)
                }
            }
            CTerm::Elem(_) => {}
            CTerm::Mul(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            CTerm::Paren(a) => a.vars(out),
        }
    }
}

#[derive(Clone, Debug)]
enum Prem {
    Eq(CTerm, CTerm),
    /// `R(t)`: true exactly when `t` is defined.
    Def(CTerm),
    Atom(usize, Vec<usize>),
}

impl Prem {
    fn vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        match self {
            Prem::Eq(a, b) => {
                a.vars(&mut out);
                b.vars(&mut out);
            }
            Prem::Def(a) => a.vars(&mut out),
            Prem::Atom(_, args) => {
                for v in args {
                    if !out.contains(v) {
                        out.push(*v)
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
enum Step {
    Check(Prem),
    Bind(usize, CTerm),
    Enum(usize),
    /// Iterate the true tuples of a predicate, binding (`true`) or checking
    /// each argument variable.
    Scan(usize, Vec<(usize, bool)>),
}

#[derive(Clone, Debug)]
struct CClause {
    nvars: usize,
    steps: Vec<Step>,
    head: Option<(usize, Vec<CTerm>)>,
}

impl CTerm {
    fn mentions_paren(&self) -> bool {
        match self {
            CTerm::Paren(_) => true,
            CTerm::Mul(a, b) => a.mentions_paren() || b.mentions_paren(),
            _ => false,
        }
    }
}

impl CClause {
    fn mentions_paren(&self) -> bool {
        let prem = |p: &Prem| match p {
            Prem::Eq(a, b) => a.mentions_paren() || b.mentions_paren(),
            Prem::Def(a) => a.mentions_paren(),
            Prem::Atom(..) => false,
        };
        self.steps.iter().any(|s| match s {
            Step::Check(p) => prem(p),
            Step::Bind(_, t) => t.mentions_paren(),
            _ => false,
        }) || self.head.as_ref().is_some_and(|(_, ts)| ts.iter().any(CTerm::mentions_paren))
    }
}

struct CayleySpec {
    chars: Vec<char>,
    /// Without parentheses in the clauses the substructure generated by the
    /// characters alone, with identity parentheses, is also a model.
    uses_paren: bool,
    preds: Vec<(String, usize)>,
    clauses: Vec<CClause>,
}

fn data_kind(k: AxiomKind) -> bool {
    matches!(
        k,
        AxiomKind::Associativity
            | AxiomKind::LeftUnit
            | AxiomKind::RightUnit
            | AxiomKind::Distinct
            | AxiomKind::DataBase
            | AxiomKind::DataParen
            | AxiomKind::DataConcat
    )
}

impl CayleySpec {
    /// `None` when the theory is not a data theory plus Horn clauses.
    fn compile(th: &FoTheory) -> Option<CayleySpec> {
        let chars = th.data_chars.clone()?;
        let data: Vec<&Formula> = th.axioms.iter().filter(|a| data_kind(a.kind)).map(|a| &a.formula).collect();
        let expected = encode_data_theory(&chars.iter().copied().collect());
        if data.len() != expected.axioms.len() || data.iter().zip(&expected.axioms).any(|(a, b)| **a != b.formula) {
            return None;
        }
        let mut consts: BTreeMap<String, u8> = BTreeMap::new();
        consts.insert(EMPTY.into(), 0);
        for (i, c) in chars.iter().enumerate() {
            consts.insert(char_const(*c), (i + 1) as u8);
        }
        let sig = th.signature();
        if sig.constants.iter().any(|c| !consts.contains_key(c)) {
            return None;
        }
        if sig.functions.iter().any(|(f, k)| !(f == CONCAT && *k == 2 || f == PAREN && *k == 1)) {
            return None;
        }
        let preds: Vec<(String, usize)> = sig.predicates.iter().filter(|(p, _)| p != DATA).cloned().collect();
        let pred_index: BTreeMap<&str, usize> = preds.iter().enumerate().map(|(i, (p, _))| (p.as_str(), i)).collect();
        let cs = clausify(th).ok()?;
        if !cs.skolems.is_empty() {
            return None;
        }
        let mut clauses = Vec::new();
        for c in &cs.clauses {
            if c.origin.is_some_and(|i| data_kind(th.axioms[i].kind)) {
                continue;
            }
            match compile_clause(c, &consts, &pred_index)? {
                Some(cc) => clauses.push(cc),
                None => continue,
            }
        }
        let uses_paren = clauses.iter().any(|c| c.mentions_paren());
        Some(CayleySpec { chars, uses_paren, preds, clauses })
    }

    fn search(&self, n: usize, deadline: Instant, parallel: bool) -> Outcome {
        let k = self.chars.len();
        if n < k + 1 || n >= UNDEF as usize {
            return Outcome::Exhausted;
        }
        let root = State::root(self, n);
        let best = AtomicUsize::new(usize::MAX);
        if !parallel {
            let mut ctl = Control { deadline, best: &best, index: 0, nodes: 0, aborted: false };
            return match self.dfs(root, &mut ctl) {
                Some(m) => Outcome::Found(m),
                None if ctl.aborted => Outcome::Aborted,
                None => Outcome::Exhausted,
            };
        }
        // breadth-first until the frontier can feed the pool
        let mut frontier = vec![root];
        let want = 4 * rayon_threads();
        let mut ctl = Control { deadline, best: &best, index: 0, nodes: 0, aborted: false };
        while frontier.len() < want && !frontier.is_empty() {
            let mut next = Vec::new();
            for st in frontier {
                if !ctl.tick() {
                    return Outcome::Aborted;
                }
                match self.expand(st) {
                    Expand::Dead => {}
                    Expand::Complete(m) => return Outcome::Found(m),
                    Expand::Children(cs) => next.extend(cs),
                }
            }
            frontier = next;
        }
        let results = par_map(frontier, |i, st| {
            let mut ctl = Control { deadline, best: &best, index: i, nodes: 0, aborted: false };
            let r = self.dfs(st, &mut ctl);
            if r.is_some() {
                best.fetch_min(i, Ordering::Relaxed);
            }
            (r, ctl.aborted)
        });
        let winner = best.load(Ordering::Relaxed);
        let mut any_timeout = false;
        for (i, (r, aborted)) in results.into_iter().enumerate() {
            if let Some(m) = r {
                if i == winner {
                    return Outcome::Found(m);
                }
            }
            // a task cancelled by an earlier winner is not a timeout
            if aborted && i < winner {
                any_timeout = true;
            }
        }
        if any_timeout {
            Outcome::Aborted
        } else {
            Outcome::Exhausted
        }
    }

    fn dfs(&self, st: State, ctl: &mut Control) -> Option<FiniteModel> {
        if !ctl.tick() {
            return None;
        }
        match self.expand(st) {
            Expand::Dead => None,
            Expand::Complete(m) => Some(m),
            Expand::Children(cs) => {
                for c in cs {
                    if let Some(m) = self.dfs(c, ctl) {
                        return Some(m);
                    }
                    if ctl.aborted {
                        return None;
                    }
                }
                None
            }
        }
    }

    fn expand(&self, mut st: State) -> Expand {
        if !st.propagate() {
            return Expand::Dead;
        }
        st.compute_mul();
        if !st.fixpoint(self) {
            return Expand::Dead;
        }
        let Some(cell) = st.first_undefined() else {
            return Expand::Complete(st.to_model(self));
        };
        let mut out = Vec::new();
        for v in st.candidates(cell) {
            let mut child = st.clone();
            child.assign(cell, v);
            out.push(child);
        }
        Expand::Children(out)
    }
}

enum Expand {
    Dead,
    Complete(FiniteModel),
    Children(Vec<State>),
}

#[cfg(feature = "parallel")]
fn rayon_threads() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
fn rayon_threads() -> usize {
    1
}

#[cfg(feature = "parallel")]
fn par_map<T: Send, R: Send>(items: Vec<T>, f: impl Fn(usize, T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.into_par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Send, R: Send>(items: Vec<T>, f: impl Fn(usize, T) -> R + Sync + Send) -> Vec<R> {
    items.into_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

fn compile_term(t: &FoTerm, vars: &[String], consts: &BTreeMap<String, u8>) -> Option<CTerm> {
    Some(match t {
        FoTerm::Var(x) => CTerm::Var(vars.iter().position(|v| v == x)?),
        FoTerm::Const(c) => CTerm::Elem(*consts.get(c)?),
        FoTerm::App(f, args) if f == CONCAT && args.len() == 2 => CTerm::Mul(
            Box::new(compile_term(&args[0], vars, consts)?),
            Box::new(compile_term(&args[1], vars, consts)?),
        ),
        FoTerm::App(f, args) if f == PAREN && args.len() == 1 => {
            CTerm::Paren(Box::new(compile_term(&args[0], vars, consts)?))
        }
        FoTerm::App(..) => return None,
    })
}

/// `Some(None)` for a clause that always holds, `None` if not Horn.
fn compile_clause(c: &Clause, consts: &BTreeMap<String, u8>, preds: &BTreeMap<&str, usize>) -> Option<Option<CClause>> {
    let mut nvars = c.vars.len();
    let mut prems = Vec::new();
    let mut head = None;
    for l in &c.lits {
        match l {
            Lit::Eq { pos: false, left, right } => {
                prems.push(Prem::Eq(compile_term(left, &c.vars, consts)?, compile_term(right, &c.vars, consts)?))
            }
            Lit::Eq { pos: true, .. } => return None,
            Lit::Pred { pos, name, args } if name == DATA => {
                let t = compile_term(&args[0], &c.vars, consts)?;
                if *pos {
                    // every generated element is data
                    return Some(None);
                }
                if !matches!(t, CTerm::Var(_)) {
                    prems.push(Prem::Def(t));
                }
            }
            Lit::Pred { pos, name, args } => {
                let p = *preds.get(name.as_str())?;
                let ts = args.iter().map(|a| compile_term(a, &c.vars, consts)).collect::<Option<Vec<_>>>()?;
                if *pos {
                    if head.is_some() {
                        return None;
                    }
                    head = Some((p, ts));
                } else {
                    let mut vs = Vec::new();
                    for t in ts {
                        match t {
                            CTerm::Var(v) => vs.push(v),
                            other => {
                                vs.push(nvars);
                                prems.push(Prem::Eq(CTerm::Var(nvars), other));
                                nvars += 1;
                            }
                        }
                    }
                    prems.push(Prem::Atom(p, vs));
                }
            }
        }
    }
    let mut bound = vec![false; nvars];
    let mut steps = Vec::new();
    loop {
        let mut progress = true;
        while progress {
            progress = false;
            let mut i = 0;
            while i < prems.len() {
                let vs = prems[i].vars();
                if vs.iter().all(|&v| bound[v]) {
                    steps.push(Step::Check(prems.remove(i)));
                    progress = true;
                    continue;
                }
                if let Prem::Eq(a, b) = &prems[i] {
                    let bindable = |x: &CTerm, y: &CTerm| match x {
                        CTerm::Var(v) if !bound[*v] => {
                            let mut yv = Vec::new();
                            y.vars(&mut yv);
                            yv.iter().all(|&w| bound[w]).then_some(*v)
                        }
                        _ => None,
                    };
                    let found = bindable(a, b).map(|v| (v, b.clone())).or_else(|| bindable(b, a).map(|v| (v, a.clone())));
                    if let Some((v, t)) = found {
                        prems.remove(i);
                        steps.push(Step::Bind(v, t));
                        bound[v] = true;
                        progress = true;
                        continue;
                    }
                }
                i += 1;
            }
        }
        if prems.is_empty() {
            break;
        }
        if let Some(i) = prems.iter().position(|p| matches!(p, Prem::Atom(..))) {
            let Prem::Atom(p, args) = prems.remove(i) else { unreachable!() };
            let mut spec = Vec::new();
            for v in args {
                let binds = !bound[v];
                bound[v] = true;
                spec.push((v, binds));
            }
            steps.push(Step::Scan(p, spec));
        } else {
            let v = prems.iter().flat_map(|p| p.vars()).find(|&v| !bound[v]).expect("an unbound variable remains");
            steps.push(Step::Enum(v));
            bound[v] = true;
        }
    }
    if let Some((_, ts)) = &head {
        let mut hv = Vec::new();
        ts.iter().for_each(|t| t.vars(&mut hv));
        for v in hv {
            if !bound[v] {
                steps.push(Step::Enum(v));
                bound[v] = true;
            }
        }
    }
    Some(Some(CClause { nvars, steps, head }))
}

#[derive(Clone, Copy, Debug)]
enum Cell {
    Delta(u8, usize),
    Beta(u8),
}

/// Candidate value `NEW` creates the next element.
const NEW: u8 = UNDEF - 1;

#[derive(Clone)]
struct State {
    n: usize,
    k: usize,
    fixed_beta: bool,
    cols: usize,
    count: usize,
    gens: usize,
    /// `delta[x * cols + g]`: `x` times generator `g`; generators are the
    /// characters, then parenthesized elements in order of creation.
    delta: Vec<u8>,
    beta: Vec<u8>,
    words: Vec<Vec<u8>>,
    relations: Vec<(Vec<u8>, Vec<u8>)>,
    mul: Vec<u8>,
    /// Bitsets of true tuples, indexed with stride `n`.
    facts: Vec<Vec<u64>>,
    arities: Vec<usize>,
}

impl State {
    fn root(spec: &CayleySpec, n: usize) -> State {
        let k = spec.chars.len();
        let cols = k + n;
        let mut st = State {
            n,
            k,
            fixed_beta: !spec.uses_paren,
            cols,
            count: k + 1,
            gens: 0,
            delta: vec![UNDEF; n * cols],
            beta: vec![UNDEF; n],
            words: vec![Vec::new(); n],
            relations: Vec::new(),
            mul: Vec::new(),
            facts: spec.preds.iter().map(|(_, a)| vec![0u64; n.pow(*a as u32).div_ceil(64)]).collect(),
            arities: spec.preds.iter().map(|(_, a)| *a).collect(),
        };
        for i in 0..k {
            st.delta[i] = (i + 1) as u8;
            st.words[i + 1] = vec![i as u8];
        }
        if st.fixed_beta {
            for x in 0..=k {
                st.beta[x] = x as u8;
            }
        }
        st
    }

    fn path(&self, mut x: u8, w: &[u8]) -> (usize, u8) {
        for (i, &g) in w.iter().enumerate() {
            let y = self.delta[x as usize * self.cols + g as usize];
            if y == UNDEF {
                return (i, x);
            }
            x = y;
        }
        (w.len(), x)
    }

    fn set_delta(&mut self, x: u8, g: u8, v: u8) {
        self.delta[x as usize * self.cols + g as usize] = v;
        let mut lhs = self.words[x as usize].clone();
        lhs.push(g);
        if lhs != self.words[v as usize] {
            self.relations.push((lhs, self.words[v as usize].clone()));
        }
    }

    /// Scans every relation from every element, deducing cells whose last
    /// step is forced. False on a contradiction.
    fn propagate(&mut self) -> bool {
        loop {
            let mut changed = false;
            let mut r = 0;
            while r < self.relations.len() {
                for x in 0..self.count as u8 {
                    let (l, rr) = (&self.relations[r].0, &self.relations[r].1);
                    let (il, sl) = self.path(x, l);
                    let (ir, sr) = self.path(x, rr);
                    let (fl, fr) = (il == l.len(), ir == rr.len());
                    if fl && fr {
                        if sl != sr {
                            return false;
                        }
                    } else if fl && ir + 1 == rr.len() {
                        let g = *rr.last().unwrap();
                        self.set_delta(sr, g, sl);
                        changed = true;
                    } else if fr && il + 1 == l.len() {
                        let g = *l.last().unwrap();
                        self.set_delta(sl, g, sr);
                        changed = true;
                    }
                }
                r += 1;
            }
            if !changed {
                return true;
            }
        }
    }

    fn compute_mul(&mut self) {
        let n = self.n;
        self.mul = vec![UNDEF; n * n];
        for x in 0..self.count {
            for y in 0..self.count {
                let (i, s) = self.path(x as u8, &self.words[y]);
                if i == self.words[y].len() {
                    self.mul[x * n + y] = s;
                }
            }
        }
    }

    fn ev(&self, t: &CTerm, env: &[u8]) -> u8 {
        match t {
            CTerm::Var(v) => env[*v],
            CTerm::Elem(e) => *e,
            CTerm::Mul(a, b) => {
                let x = self.ev(a, env);
                if x == UNDEF {
                    return UNDEF;
                }
                let y = self.ev(b, env);
                if y == UNDEF {
                    return UNDEF;
                }
                self.mul[x as usize * self.n + y as usize]
            }
            CTerm::Paren(a) => {
                let x = self.ev(a, env);
                if x == UNDEF {
                    UNDEF
                } else {
                    self.beta[x as usize]
                }
            }
        }
    }

    fn fact(&self, p: usize, idx: usize) -> bool {
        self.facts[p][idx / 64] >> (idx % 64) & 1 == 1
    }

    fn prem(&self, pr: &Prem, env: &[u8]) -> bool {
        match pr {
            Prem::Eq(a, b) => {
                let x = self.ev(a, env);
                x != UNDEF && x == self.ev(b, env)
            }
            Prem::Def(a) => self.ev(a, env) != UNDEF,
            Prem::Atom(p, args) => {
                let idx = args.iter().fold(0, |acc, &v| acc * self.n + env[v] as usize);
                self.fact(*p, idx)
            }
        }
    }

    /// Runs a clause from step `i`; true when a goal clause fires.
    fn exec(&self, c: &CClause, i: usize, env: &mut [u8], out: &mut Vec<(usize, usize)>) -> bool {
        let Some(step) = c.steps.get(i) else {
            let Some((p, args)) = &c.head else {
                return true;
            };
            let mut idx = 0;
            for a in args {
                let x = self.ev(a, env);
                if x == UNDEF {
                    return false;
                }
                idx = idx * self.n + x as usize;
            }
            if !self.fact(*p, idx) {
                out.push((*p, idx));
            }
            return false;
        };
        match step {
            Step::Check(pr) => self.prem(pr, env) && self.exec(c, i + 1, env, out),
            Step::Bind(v, t) => {
                let x = self.ev(t, env);
                if x == UNDEF {
                    return false;
                }
                env[*v] = x;
                self.exec(c, i + 1, env, out)
            }
            Step::Enum(v) => {
                for x in 0..self.count as u8 {
                    env[*v] = x;
                    if self.exec(c, i + 1, env, out) {
                        return true;
                    }
                }
                false
            }
            Step::Scan(p, spec) => {
                let arity = self.arities[*p];
                for (w, &word) in self.facts[*p].iter().enumerate() {
                    let mut bits = word;
                    while bits != 0 {
                        let idx = w * 64 + bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        let tuple = tuple_of(idx, arity, self.n);
                        let ok = spec.iter().zip(&tuple).all(|(&(v, binds), &d)| {
                            if binds {
                                env[v] = d as u8;
                                true
                            } else {
                                env[v] == d as u8
                            }
                        });
                        // a repeated binding variable must agree with itself
                        let ok = ok && spec.iter().zip(&tuple).all(|(&(v, _), &d)| env[v] == d as u8);
                        if ok && self.exec(c, i + 1, env, out) {
                            return true;
                        }
                    }
                }
                false
            }
        }
    }

    /// Least fixpoint of the program clauses on the defined part; false if
    /// a goal clause fires.
    fn fixpoint(&mut self, spec: &CayleySpec) -> bool {
        let mut env = Vec::new();
        loop {
            let mut new = Vec::new();
            for c in &spec.clauses {
                env.clear();
                env.resize(c.nvars, UNDEF);
                if self.exec(c, 0, &mut env, &mut new) {
                    return false;
                }
            }
            if new.is_empty() {
                return true;
            }
            for (p, idx) in new {
                self.facts[p][idx / 64] |= 1 << (idx % 64);
            }
        }
    }

    fn first_undefined(&self) -> Option<Cell> {
        for x in 0..self.count {
            let row = &self.delta[x * self.cols..];
            for g in 0..self.k {
                if row[g] == UNDEF {
                    return Some(Cell::Delta(x as u8, g));
                }
            }
            if self.beta[x] == UNDEF {
                return Some(Cell::Beta(x as u8));
            }
            for g in self.k..self.k + self.gens {
                if row[g] == UNDEF {
                    return Some(Cell::Delta(x as u8, g));
                }
            }
        }
        None
    }

    fn candidates(&self, cell: Cell) -> Vec<u8> {
        let mut out: Vec<u8> = match cell {
            Cell::Delta(..) => (0..self.count as u8).collect(),
            // the identity first: parentheses are often invisible to a goal
            Cell::Beta(x) => std::iter::once(x).chain((0..self.count as u8).filter(|&y| y != x)).collect(),
        };
        if self.count < self.n {
            out.push(NEW);
        }
        out
    }

    fn assign(&mut self, cell: Cell, v: u8) {
        match cell {
            Cell::Delta(x, g) if v == NEW => {
                let e = self.count;
                self.count += 1;
                let mut w = self.words[x as usize].clone();
                w.push(g as u8);
                self.words[e] = w;
                self.delta[x as usize * self.cols + g] = e as u8;
                if self.fixed_beta {
                    self.beta[e] = e as u8;
                }
            }
            Cell::Delta(x, g) => self.set_delta(x, g as u8, v),
            Cell::Beta(x) if v == NEW => {
                let e = self.count;
                self.count += 1;
                let g = self.k + self.gens;
                self.gens += 1;
                self.words[e] = vec![g as u8];
                self.delta[g] = e as u8;
                self.beta[x as usize] = e as u8;
            }
            Cell::Beta(x) => self.beta[x as usize] = v,
        }
    }

    fn to_model(&self, spec: &CayleySpec) -> FiniteModel {
        let m = self.count;
        let mut constants = BTreeMap::new();
        constants.insert(EMPTY.to_string(), 0);
        for (i, c) in spec.chars.iter().enumerate() {
            constants.insert(char_const(*c), i + 1);
        }
        let mut concat = Vec::with_capacity(m * m);
        for x in 0..m {
            for y in 0..m {
                concat.push(self.mul[x * self.n + y] as usize);
            }
        }
        let mut functions = BTreeMap::new();
        functions.insert(CONCAT.to_string(), Table { arity: 2, values: concat });
        functions.insert(PAREN.to_string(), Table { arity: 1, values: self.beta[..m].iter().map(|&b| b as usize).collect() });
        let mut relations = BTreeMap::new();
        relations.insert(DATA.to_string(), Relation { arity: 1, holds: vec![true; m] });
        for (p, (name, arity)) in spec.preds.iter().enumerate() {
            let holds = (0..m.pow(*arity as u32))
                .map(|i| self.fact(p, tuple_index(&tuple_of(i, *arity, m), self.n)))
                .collect();
            relations.insert(name.clone(), Relation { arity: *arity, holds });
        }
        FiniteModel { size: m, constants, functions, relations }
    }
}

// ---------------------------------------------------------------------------
// Plain cell search

#[derive(Clone, Debug)]
enum GTerm {
    Var(usize),
    App(usize, Vec<GTerm>),
}

#[derive(Clone, Debug)]
enum GLit {
    Eq(bool, GTerm, GTerm),
    Pred(bool, usize, Vec<GTerm>),
}

struct Generic {
    n: usize,
    funs: Vec<(String, usize)>,
    preds: Vec<(String, usize)>,
    clauses: Vec<(usize, Vec<GLit>)>,
    fvals: Vec<Vec<u8>>,
    pvals: Vec<Vec<u8>>,
    order: Vec<(bool, usize, usize, usize)>,
}

fn generic_search(th: &FoTheory, n: usize, deadline: Instant) -> Result<Outcome, FinderError> {
    let cs = clausify(th).map_err(FinderError::Unsupported)?;
    let sig = th.signature();
    let mut funs: Vec<(String, usize)> = sig.constants.iter().map(|c| (c.clone(), 0)).collect();
    funs.extend(cs.skolems.iter().filter(|(_, a)| *a == 0).cloned());
    funs.extend(sig.functions.iter().cloned());
    funs.extend(cs.skolems.iter().filter(|(_, a)| *a > 0).cloned());
    let preds = sig.predicates.clone();
    fn conv(t: &FoTerm, vars: &[String], funs: &[(String, usize)]) -> Result<GTerm, FinderError> {
        Ok(match t {
            FoTerm::Var(x) => GTerm::Var(vars.iter().position(|v| v == x).ok_or_else(|| FinderError::Unsupported(x.clone()))?),
            FoTerm::Const(c) => GTerm::App(funs.iter().position(|(f, a)| f == c && *a == 0).unwrap(), Vec::new()),
            FoTerm::App(f, args) => GTerm::App(
                funs.iter().position(|(g, a)| g == f && *a == args.len()).unwrap(),
                args.iter().map(|a| conv(a, vars, funs)).collect::<Result<_, _>>()?,
            ),
        })
    }
    let mut clauses = Vec::new();
    for c in &cs.clauses {
        let mut lits = Vec::new();
        for l in &c.lits {
            lits.push(match l {
                Lit::Eq { pos, left, right } => GLit::Eq(*pos, conv(left, &c.vars, &funs)?, conv(right, &c.vars, &funs)?),
                Lit::Pred { pos, name, args } => GLit::Pred(
                    *pos,
                    preds.iter().position(|(p, a)| p == name && *a == args.len()).unwrap(),
                    args.iter().map(|a| conv(a, &c.vars, &funs)).collect::<Result<_, _>>()?,
                ),
            });
        }
        clauses.push((c.vars.len(), lits));
    }
    let mut order = Vec::new();
    for (i, (_, a)) in funs.iter().enumerate() {
        for idx in 0..n.pow(*a as u32) {
            let maxarg = tuple_of(idx, *a, n).into_iter().max().unwrap_or(0);
            order.push((false, i, idx, maxarg));
        }
    }
    order.sort_by_key(|&(_, i, idx, maxarg)| (maxarg, funs[i].1 > 0, i, idx));
    for (i, (_, a)) in preds.iter().enumerate() {
        for idx in 0..n.pow(*a as u32) {
            order.push((true, i, idx, 0));
        }
    }
    let mut g = Generic {
        n,
        fvals: funs.iter().map(|(_, a)| vec![UNDEF; n.pow(*a as u32)]).collect(),
        pvals: preds.iter().map(|(_, a)| vec![UNDEF; n.pow(*a as u32)]).collect(),
        funs,
        preds,
        clauses,
        order,
    };
    let best = AtomicUsize::new(usize::MAX);
    let mut ctl = Control { deadline, best: &best, index: 0, nodes: 0, aborted: false };
    if g.conflict() {
        return Ok(Outcome::Exhausted);
    }
    Ok(if g.dfs(0, 0, &mut ctl) {
        Outcome::Found(g.model())
    } else if ctl.aborted {
        Outcome::Aborted
    } else {
        Outcome::Exhausted
    })
}

impl Generic {
    fn ev(&self, t: &GTerm, env: &[usize]) -> Option<usize> {
        match t {
            GTerm::Var(v) => Some(env[*v]),
            GTerm::App(f, args) => {
                let mut idx = 0;
                for a in args {
                    idx = idx * self.n + self.ev(a, env)?;
                }
                let v = self.fvals[*f][idx];
                (v != UNDEF).then_some(v as usize)
            }
        }
    }

    fn lit(&self, l: &GLit, env: &[usize]) -> Option<bool> {
        match l {
            GLit::Eq(pos, a, b) => Some((self.ev(a, env)? == self.ev(b, env)?) == *pos),
            GLit::Pred(pos, p, args) => {
                let mut idx = 0;
                for a in args {
                    idx = idx * self.n + self.ev(a, env)?;
                }
                let v = self.pvals[*p][idx];
                (v != UNDEF).then_some((v == 1) == *pos)
            }
        }
    }

    /// Some ground instance has every literal false.
    fn conflict(&self) -> bool {
        for (nv, lits) in &self.clauses {
            let mut env = vec![0; *nv];
            loop {
                if lits.iter().all(|l| self.lit(l, &env) == Some(false)) {
                    return true;
                }
                let mut i = 0;
                while i < *nv {
                    env[i] += 1;
                    if env[i] < self.n {
                        break;
                    }
                    env[i] = 0;
                    i += 1;
                }
                if i == *nv {
                    break;
                }
            }
        }
        false
    }

    fn dfs(&mut self, pos: usize, maxused: usize, ctl: &mut Control) -> bool {
        if !ctl.tick() {
            return false;
        }
        let Some(&(is_pred, i, idx, maxarg)) = self.order.get(pos) else {
            return true;
        };
        if is_pred {
            for v in [0u8, 1] {
                self.pvals[i][idx] = v;
                if !self.conflict() && self.dfs(pos + 1, maxused, ctl) {
                    return true;
                }
                if ctl.aborted {
                    break;
                }
            }
            self.pvals[i][idx] = UNDEF;
            return false;
        }
        // least-number heuristic: at most one element beyond those seen
        let seen = if pos == 0 { 0 } else { maxused.max(maxarg) + 1 };
        let top = seen.min(self.n - 1);
        for v in 0..=top {
            self.fvals[i][idx] = v as u8;
            let used = if pos == 0 { v } else { maxused.max(maxarg).max(v) };
            if !self.conflict() && self.dfs(pos + 1, used, ctl) {
                return true;
            }
            if ctl.aborted {
                break;
            }
        }
        self.fvals[i][idx] = UNDEF;
        false
    }

    fn model(&self) -> FiniteModel {
        let mut constants = BTreeMap::new();
        let mut functions = BTreeMap::new();
        for (i, (f, a)) in self.funs.iter().enumerate() {
            if *a == 0 {
                constants.insert(f.clone(), self.fvals[i][0] as usize);
            } else {
                functions.insert(f.clone(), Table { arity: *a, values: self.fvals[i].iter().map(|&v| v as usize).collect() });
            }
        }
        let relations = self
            .preds
            .iter()
            .enumerate()
            .map(|(i, (p, a))| (p.clone(), Relation { arity: *a, holds: self.pvals[i].iter().map(|&v| v == 1).collect() }))
            .collect();
        FiniteModel { size: self.n, constants, functions, relations }
    }
}

// ---------------------------------------------------------------------------
// Term automata

/// A deterministic bottom-up automaton over data terms read off a model:
/// states are elements, transitions are the operation tables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TermAutomaton {
    pub states: usize,
    pub empty: usize,
    pub letters: BTreeMap<char, usize>,
    pub concat: Vec<usize>,
    pub paren: Vec<usize>,
    pub predicate: String,
    pub arity: usize,
    /// Accepts the complement of the predicate when false.
    pub positive: bool,
    pub accepting: BTreeSet<Vec<usize>>,
}

impl TermAutomaton {
    /// The state reached on a ground data term; `None` on calls, variables
    /// and letters the model does not interpret.
    pub fn run(&self, t: &Term) -> Option<usize> {
        let mut state = self.empty;
        for item in t.items() {
            let s = match item {
                Term::Char(c) => *self.letters.get(c)?,
                Term::Paren(inner) => self.paren[self.run(inner)?],
                _ => return None,
            };
            state = self.concat[state * self.states + s];
        }
        Some(state)
    }

    pub fn accepts(&self, args: &[Term]) -> bool {
        if args.len() != self.arity {
            return false;
        }
        match args.iter().map(|a| self.run(a)).collect::<Option<Vec<_>>>() {
            Some(states) => self.accepting.contains(&states),
            None => false,
        }
    }

    /// Graphviz rendering of the transition structure.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph automaton {\n  rankdir=LR;\n");
        let finals: BTreeSet<usize> = if self.arity == 1 { self.accepting.iter().map(|t| t[0]).collect() } else { BTreeSet::new() };
        for s in 0..self.states {
            let shape = if finals.contains(&s) { "doublecircle" } else { "circle" };
            out.push_str(&format!("  q{s} [shape={shape}];\n"));
        }
        out.push_str(&format!("  start [shape=point];\n  start -> q{};\n", self.empty));
        for s in 0..self.states {
            for (c, &l) in &self.letters {
                out.push_str(&format!("  q{s} -> q{} [label=\"'{c}'\"];\n", self.concat[s * self.states + l]));
            }
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for TermAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "automaton for {}{} over {} states", if self.positive { "" } else { "¬" }, self.predicate, self.states)?;
        writeln!(f, "  ε ↦ q{}", self.empty)?;
        for (c, s) in &self.letters {
            writeln!(f, "  '{c}' ↦ q{s}")?;
        }
        for x in 0..self.states {
            let row: Vec<String> = (0..self.states).map(|y| format!("q{}", self.concat[x * self.states + y])).collect();
            writeln!(f, "  q{x} : [{}]  (q{x}) ↦ q{}", row.join(" "), self.paren[x])?;
        }
        let acc: Vec<String> =
            self.accepting.iter().map(|t| t.iter().map(|s| format!("q{s}")).collect::<Vec<_>>().join(",")).collect();
        writeln!(f, "  accepting: {{{}}}", acc.join("; "))
    }
}

/// Reads the automaton of `predicate` (or of its complement) off a model of
/// the data theory.
pub fn model_to_automaton(m: &FiniteModel, predicate: &str, positive: bool) -> Result<TermAutomaton, String> {
    let concat = m.functions.get(CONCAT).ok_or("model has no concatenation")?;
    let paren = m.functions.get(PAREN).ok_or("model has no parentheses")?;
    let empty = *m.constants.get(EMPTY).ok_or("model has no empty word")?;
    let rel = m.relations.get(predicate).ok_or_else(|| format!("model has no predicate {predicate}"))?;
    let letters = m
        .constants
        .iter()
        .filter_map(|(name, &v)| {
            let c = crate::fol::const_char(name)?;
            Some((c, v))
        })
        .collect();
    let accepting = (0..rel.holds.len())
        .filter(|&i| rel.holds[i] == positive)
        .map(|i| tuple_of(i, rel.arity, m.size))
        .collect();
    Ok(TermAutomaton {
        states: m.size,
        empty,
        letters,
        concat: concat.values.clone(),
        paren: paren.values.clone(),
        predicate: predicate.to_string(),
        arity: rel.arity,
        positive,
        accepting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::{encode_equations_goal, with_goal};
    use crate::syntax::parse_term;

    fn opts(max: usize) -> FinderOptions {
        FinderOptions { max_size: max, deadline: Duration::from_secs(60), ..Default::default() }
    }

    #[test]
    fn satisfiable_data_theory_has_small_model() {
        let th = encode_data_theory(&['a'].into());
        let m = find_model(&th, &opts(4)).unwrap();
        assert_eq!(m.size, 2);
        check_model(&m, &th).unwrap();
        let g = find_model(&th, &FinderOptions { force_generic: true, ..opts(4) }).unwrap();
        assert_eq!(g.size, 2);
    }

    #[test]
    fn commutation_is_refuted() {
        // 'a':e.x = e.x:'b' has no solution; a two-letter count model shows it
        let eqs = vec![(parse_term("'a':e.x").unwrap(), parse_term("e.x:'b'").unwrap())];
        let th = encode_equations_goal(&eqs);
        let m = find_model(&th, &opts(8)).unwrap();
        check_model(&m, &th).unwrap();
        let g = find_model(&th, &FinderOptions { force_generic: true, ..opts(m.size) }).unwrap();
        assert_eq!(g.size, m.size);
    }

    #[test]
    fn solvable_equation_has_no_model() {
        let eqs = vec![(parse_term("'a':e.x").unwrap(), parse_term("e.x:'a'").unwrap())];
        let th = encode_equations_goal(&eqs);
        assert_eq!(
            find_model(&th, &FinderOptions { max_size: 5, ..opts(5) }),
            Err(FinderError::ExhaustedSizes { min: 1, max: 5 })
        );
    }

    #[test]
    fn repeated_variable_equation() {
        let eqs = vec![(parse_term("'a':e.q:'a':e.q:'b'").unwrap(), parse_term("e.q:'a':e.q:'b':e.q").unwrap())];
        let th = encode_equations_goal(&eqs);
        let m = find_model(&th, &opts(16)).unwrap();
        assert!(m.size <= 16);
        check_model(&m, &th).unwrap();
        let seq = find_model(&th, &FinderOptions { parallel: false, ..opts(16) }).unwrap();
        assert_eq!(seq, m);
    }

    #[test]
    fn automaton_agrees_with_model() {
        let eqs = vec![(parse_term("'a':e.x").unwrap(), parse_term("e.x:'b'").unwrap())];
        let mut th = encode_equations_goal(&eqs);
        th = with_goal(&th, th.goal.clone().unwrap());
        let m = find_model(&th, &opts(8)).unwrap();
        let a = model_to_automaton(&m, DATA, true).unwrap();
        for w in ["ε", "'ab'", "('a'):'b'", "(('b'))"] {
            let t = parse_term(w).unwrap();
            assert!(a.accepts(std::slice::from_ref(&t)), "{w}");
            assert_eq!(a.run(&t), Some(m.eval(&crate::fol::encode_term(&t), &[]).unwrap()));
        }
        assert!(!a.accepts(&[parse_term("'c'").unwrap()]));
        assert!(a.to_dot().starts_with("digraph"));
    }
}
