//! Positive supercompilation: driving by extended matching, folding into
//! ancestors, whistle-triggered generalization, output-format analysis with
//! finite countermodels, and residual program extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::finder::{find_model, FinderOptions, FiniteModel};
use crate::fol::{encode_exit_goal, encode_program_overapprox, EncodeOptions, ReachabilityEncoding, Target};
use crate::interp::{redex, replace_redex};
use crate::matcher::{extended_match, no_solution_check, MatchOutcome, NoSolBudget, NoSolVerdict};
use crate::program::Program;
use crate::syntax::print_term;
use crate::term::{instance_of, rename_apart, vars, FreshNames, Substitution, Term, Var, VarKind};

#[derive(Clone, Debug)]
pub struct ScpOptions {
    pub max_nodes: usize,
    pub max_depth: usize,
    /// Budget of each model-finder call.
    pub fcm: FinderOptions,
    pub use_fcm: bool,
    /// Whole-run budget; finder calls are clipped to what remains.
    pub deadline: Duration,
    pub encode: EncodeOptions,
}

impl Default for ScpOptions {
    fn default() -> Self {
        ScpOptions {
            max_nodes: 500,
            max_depth: 100,
            fcm: FinderOptions { deadline: Duration::from_secs(10), ..Default::default() },
            use_fcm: true,
            deadline: Duration::from_secs(300),
            encode: EncodeOptions { project_counters: true },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScpError {
    #[error("limit exceeded: {0}")]
    LimitExceeded(String),
    #[error("graph has open nodes")]
    OpenGraph,
    #[error("residual program is invalid: {0}")]
    Residual(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Edge {
    /// Index of the rule in the source program, starting at 1.
    pub rule: usize,
    pub narrowing: Substitution,
    pub child: usize,
    /// The driven call under the narrowing; reaching an instance of it is
    /// the precondition of this edge.
    pub redex: Term,
    /// Set when the branch was shown unreachable.
    pub pruned: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum NodeState {
    Open,
    Exit,
    Driven { edges: Vec<Edge> },
    /// Reference to an ancestor: `term = substitution(ancestor.term)`.
    Folded { ancestor: usize, substitution: Substitution },
    /// `term = substitution(child.term)` where the child is more general.
    Generalized { child: usize, substitution: Substitution },
    /// Driving gave up here; the residual keeps the original calls.
    Opaque { reason: String },
    Removed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Node {
    pub id: usize,
    pub term: Term,
    pub parent: Option<usize>,
    pub depth: usize,
    pub state: NodeState,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnfoldGraph {
    pub nodes: Vec<Node>,
    pub root: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrunedRule {
    pub node: usize,
    pub function: String,
    pub rule: usize,
    /// No object instance of this call matches the rule.
    pub redex: Term,
    pub certificate: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrunedExit {
    pub node: usize,
    pub result: Option<Term>,
    pub target: String,
    pub certificate: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "term", rename_all = "snake_case")]
pub enum OutputFormat {
    /// No exit is reachable.
    Empty,
    Datum(Term),
    Pattern(Term),
}

impl OutputFormat {
    /// Whether `value` is an instance of the format.
    pub fn admits(&self, value: &Term) -> bool {
        match self {
            OutputFormat::Empty => false,
            OutputFormat::Datum(d) => d == value,
            OutputFormat::Pattern(p) => instance_of(value, p).is_some(),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputFormat::Empty => f.write_str("the empty partial function"),
            OutputFormat::Datum(d) | OutputFormat::Pattern(d) => f.write_str(&print_term(d)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScpReport {
    pub nodes: usize,
    pub generalizations: usize,
    pub folds: usize,
    pub pruned_rules: Vec<PrunedRule>,
    pub pruned_exits: Vec<PrunedExit>,
    pub format: OutputFormat,
    /// Formats of self-sufficient loop entries other than the root.
    pub loop_formats: Vec<(usize, OutputFormat)>,
    pub residual_rules: usize,
    #[serde(skip)]
    pub models: Vec<FiniteModel>,
}

#[derive(Clone, Debug)]
pub struct ScpResult {
    pub graph: UnfoldGraph,
    pub residual: Program,
    pub report: ScpReport,
}

// ---------------------------------------------------------------------------
// Whistle

/// Homeomorphic embedding `a ⊴ b` lifted to sequences: every variable
/// couples with every variable, characters couple with themselves, and a
/// term may dive into a parenthesis or a call argument.
pub fn embeds(a: &Term, b: &Term) -> bool {
    seq_embeds(a.items(), b.items())
}

fn seq_embeds(a: &[Term], b: &[Term]) -> bool {
    if subsequence(a, b) {
        return true;
    }
    b.iter().any(|y| match y {
        Term::Paren(inner) => seq_embeds(a, inner.items()),
        Term::Call(_, args) => args.iter().any(|arg| seq_embeds(a, arg.items())),
        _ => false,
    })
}

fn subsequence(a: &[Term], b: &[Term]) -> bool {
    let mut j = 0;
    for x in a {
        loop {
            if j == b.len() {
                return false;
            }
            j += 1;
            if item_embeds(x, &b[j - 1]) {
                break;
            }
        }
    }
    true
}

fn item_embeds(x: &Term, y: &Term) -> bool {
    let coupled = match (x, y) {
        (Term::Char(c), Term::Char(d)) => c == d,
        (Term::Var(_), Term::Var(_)) => true,
        (Term::Paren(p), Term::Paren(q)) => embeds(p, q),
        (Term::Call(f, xs), Term::Call(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(a, b)| embeds(a, b))
        }
        _ => false,
    };
    coupled
        || match y {
            Term::Paren(inner) => seq_embeds(std::slice::from_ref(x), inner.items()),
            Term::Call(_, args) => args.iter().any(|arg| seq_embeds(std::slice::from_ref(x), arg.items())),
            _ => false,
        }
}

/// Function names in preorder; the whistle only compares configurations
/// with the same call structure.
fn skeleton(t: &Term) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    t.calls(&mut out);
    out
}

// ---------------------------------------------------------------------------
// Most specific generalization

/// Anti-unifier state; equal pairs of disagreeing subterms share a variable.
pub struct Generalizer {
    fresh: FreshNames,
    pairs: BTreeMap<(VarKind, Term, Term), Var>,
    pub left: Substitution,
    pub right: Substitution,
}

impl Generalizer {
    pub fn new(prefix: &str) -> Self {
        Generalizer {
            fresh: FreshNames::new(prefix),
            pairs: BTreeMap::new(),
            left: Substitution::new(),
            right: Substitution::new(),
        }
    }

    fn var_for(&mut self, kind: VarKind, a: Term, b: Term) -> Term {
        if let Some(v) = self.pairs.get(&(kind, a.clone(), b.clone())) {
            return Term::Var(v.clone());
        }
        let v = self.fresh.var(kind);
        self.left.bind_unchecked(v.clone(), a.clone());
        self.right.bind_unchecked(v.clone(), b.clone());
        self.pairs.insert((kind, a, b), v.clone());
        Term::Var(v)
    }

    /// `g` with `left(g) = a` and `right(g) = b`; `None` when a call would
    /// have to be abstracted by a variable.
    pub fn msg(&mut self, a: &Term, b: &Term) -> Option<Term> {
        self.seq(a.items(), b.items())
    }

    fn seq(&mut self, a: &[Term], b: &[Term]) -> Option<Term> {
        if a == b {
            return Some(Term::from_items(a.to_vec()));
        }
        let pre = a.iter().zip(b).take_while(|(x, y)| x == y).count();
        let room = a.len().min(b.len()) - pre;
        let suf = a.iter().rev().zip(b.iter().rev()).take(room).take_while(|(x, y)| x == y).count();
        let (ma, mb) = (&a[pre..a.len() - suf], &b[pre..b.len() - suf]);
        let mut items: Vec<Term> = a[..pre].to_vec();
        if ma.len() == mb.len() && ma.iter().zip(mb).all(|(x, y)| compatible(x, y)) {
            for (x, y) in ma.iter().zip(mb) {
                items.push(self.item(x, y)?);
            }
        } else {
            if ma.iter().chain(mb).any(|x| matches!(x, Term::Call(..))) {
                return None;
            }
            items.push(self.var_for(VarKind::E, Term::from_items(ma.to_vec()), Term::from_items(mb.to_vec())));
        }
        items.extend_from_slice(&a[a.len() - suf..]);
        Some(Term::seq(items))
    }

    fn item(&mut self, x: &Term, y: &Term) -> Option<Term> {
        if x == y {
            return Some(x.clone());
        }
        match (x, y) {
            (Term::Paren(p), Term::Paren(q)) => Some(Term::paren(self.msg(p, q)?)),
            (Term::Call(f, xs), Term::Call(_, ys)) => {
                let args = xs.iter().zip(ys).map(|(a, b)| self.msg(a, b)).collect::<Option<Vec<_>>>()?;
                Some(Term::Call(f.clone(), args))
            }
            _ if symbol_like(x) && symbol_like(y) => Some(self.var_for(VarKind::S, x.clone(), y.clone())),
            _ if term_like(x) && term_like(y) => Some(self.var_for(VarKind::T, x.clone(), y.clone())),
            _ => Some(self.var_for(VarKind::E, x.clone(), y.clone())),
        }
    }
}

fn symbol_like(x: &Term) -> bool {
    matches!(x, Term::Char(_)) || matches!(x, Term::Var(v) if v.kind == VarKind::S)
}

fn term_like(x: &Term) -> bool {
    matches!(x, Term::Char(_) | Term::Paren(_)) || matches!(x, Term::Var(v) if v.kind != VarKind::E)
}

fn compatible(x: &Term, y: &Term) -> bool {
    match (x, y) {
        (Term::Call(f, xs), Term::Call(g, ys)) => f == g && xs.len() == ys.len(),
        (Term::Call(..), _) | (_, Term::Call(..)) => false,
        _ => true,
    }
}

/// Most specific generalization of a non-empty list of passive terms.
pub fn msg_all(terms: &[Term], prefix: &str) -> Term {
    let mut g = terms[0].clone();
    for (round, t) in terms[1..].iter().enumerate() {
        // a new prefix per round keeps earlier variables distinct
        let mut gen = Generalizer::new(&format!("{prefix}{round}_"));
        g = gen.msg(&g, t).unwrap_or_else(|| Term::var(Var::e(format!("{prefix}{round}_0"))));
    }
    g
}

fn is_renaming(a: &Term, b: &Term) -> bool {
    instance_of(a, b).is_some() && instance_of(b, a).is_some()
}

// ---------------------------------------------------------------------------
// Driving

struct Driver<'a> {
    p: &'a Program,
    opts: &'a ScpOptions,
    started: Instant,
    nodes: Vec<Node>,
    pruned_rules: Vec<PrunedRule>,
    gen_prefix: String,
    gen_count: usize,
    generalizations: usize,
    created: usize,
    models: Vec<FiniteModel>,
}

fn fresh_prefix(taken: &BTreeSet<String>, base: &str) -> String {
    let mut prefix = base.to_string();
    while taken.iter().any(|n| n.starts_with(&prefix)) {
        prefix.push(base.chars().next().unwrap());
    }
    prefix
}

impl Driver<'_> {
    fn remaining(&self) -> Option<Duration> {
        self.opts.deadline.checked_sub(self.started.elapsed())
    }

    fn finder_options(&self) -> FinderOptions {
        let left = self.remaining().unwrap_or_default();
        FinderOptions { deadline: self.opts.fcm.deadline.min(left), ..self.opts.fcm.clone() }
    }

    fn live(&self) -> usize {
        self.nodes.iter().filter(|n| n.state != NodeState::Removed).count()
    }

    fn add(&mut self, term: Term, parent: Option<usize>) -> Result<usize, ScpError> {
        let depth = parent.map_or(0, |p| self.nodes[p].depth + 1);
        if depth > self.opts.max_depth {
            return Err(ScpError::LimitExceeded(format!("depth above {}", self.opts.max_depth)));
        }
        self.created += 1;
        if self.live() >= self.opts.max_nodes || self.created > 20 * self.opts.max_nodes {
            return Err(ScpError::LimitExceeded(format!("more than {} nodes", self.opts.max_nodes)));
        }
        let id = self.nodes.len();
        self.nodes.push(Node { id, term, parent, depth, state: NodeState::Open });
        Ok(id)
    }

    fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[id].parent;
        while let Some(a) = cur {
            out.push(a);
            cur = self.nodes[a].parent;
        }
        out
    }

    fn remove_below(&mut self, id: usize) {
        let children: Vec<usize> = match &self.nodes[id].state {
            NodeState::Driven { edges } => edges.iter().map(|e| e.child).collect(),
            NodeState::Generalized { child, .. } => vec![*child],
            _ => Vec::new(),
        };
        for c in children {
            self.remove_below(c);
            self.nodes[c].state = NodeState::Removed;
        }
    }

    fn run(&mut self, root: usize) -> Result<(), ScpError> {
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if self.nodes[id].state != NodeState::Open {
                continue;
            }
            if self.remaining().is_none() {
                return Err(ScpError::LimitExceeded("deadline".into()));
            }
            let mut pushed = self.process(id)?;
            pushed.reverse();
            stack.extend(pushed);
        }
        Ok(())
    }

    /// Returns the nodes created that still need processing.
    fn process(&mut self, id: usize) -> Result<Vec<usize>, ScpError> {
        let term = self.nodes[id].term.clone();
        if term.is_passive() {
            self.nodes[id].state = NodeState::Exit;
            return Ok(Vec::new());
        }
        let shape = skeleton(&term);
        let candidates: Vec<usize> = self
            .ancestors(id)
            .into_iter()
            .filter(|&a| matches!(self.nodes[a].state, NodeState::Driven { .. }) && skeleton(&self.nodes[a].term) == shape)
            .collect();
        for &a in &candidates {
            if let Some(sub) = instance_of(&term, &self.nodes[a].term) {
                self.nodes[id].state = NodeState::Folded { ancestor: a, substitution: sub };
                return Ok(Vec::new());
            }
        }
        for &a in &candidates {
            let up = self.nodes[a].term.clone();
            if !embeds(&up, &term) {
                continue;
            }
            self.gen_count += 1;
            let mut gen = Generalizer::new(&format!("{}{}_", self.gen_prefix, self.gen_count));
            let Some(g) = gen.msg(&up, &term) else { continue };
            if is_renaming(&g, &up) {
                continue;
            }
            self.generalizations += 1;
            self.remove_below(a);
            self.pruned_rules.retain(|r| self.nodes[r.node].state != NodeState::Removed);
            let child = self.add(g, Some(a))?;
            self.nodes[a].state = NodeState::Generalized { child, substitution: gen.left };
            return Ok(vec![child]);
        }
        self.drive(id)
    }

    fn drive(&mut self, id: usize) -> Result<Vec<usize>, ScpError> {
        let term = self.nodes[id].term.clone();
        let call = redex(&term).cloned().expect("active term has a redex");
        let Term::Call(f, _) = &call else { unreachable!() };
        let rules: Vec<_> = self.p.rules_for(f).cloned().collect();
        if rules.is_empty() {
            self.nodes[id].state = NodeState::Opaque { reason: format!("{f} has no rules") };
            return Ok(Vec::new());
        }
        let mut branches = Vec::new();
        let budget = NoSolBudget { use_fcm: self.opts.use_fcm, fcm: self.finder_options() };
        for rule in &rules {
            let lhs = rename_apart(&rule.lhs, "#");
            let rhs = rename_apart(&rule.rhs, "#");
            let found = match extended_match(&call, &lhs) {
                MatchOutcome::NoSolution(reason) => {
                    self.prune_rule(id, f, rule.index, call.clone(), format!("syntactic: {reason}"));
                    continue;
                }
                MatchOutcome::Solution(b) => vec![b],
                MatchOutcome::Solutions(bs) => bs,
                MatchOutcome::Unknown { solved, stuck } => {
                    for s in &stuck {
                        if s.residual.is_empty() {
                            return self.give_up(id, &s.reason);
                        }
                        match no_solution_check(&s.residual, &budget) {
                            NoSolVerdict::Inconsistent(cert) => {
                                if let crate::matcher::Certificate::Model { model, .. } = &cert {
                                    self.models.push(model.clone());
                                }
                                let under = s.narrowing.apply_unchecked(&call);
                                self.prune_rule(id, f, rule.index, under, cert.to_string());
                            }
                            NoSolVerdict::Unknown { reason } => return self.give_up(id, &reason),
                        }
                    }
                    solved
                }
            };
            for b in found {
                let narrowed = b.narrowing.apply_unchecked(&term);
                let body = b.binding.apply_unchecked(&rhs);
                let mut once = Some(body);
                let child_term = replace_redex(&narrowed, &mut |_, _| once.take()).expect("redex survives narrowing");
                let redex_here = b.narrowing.apply_unchecked(&call);
                branches.push((rule.index, b.narrowing, redex_here, child_term));
            }
        }
        let mut edges = Vec::new();
        let mut fresh = Vec::new();
        for (rule, narrowing, redex_here, child_term) in branches {
            let child = self.add(child_term, Some(id))?;
            fresh.push(child);
            edges.push(Edge { rule, narrowing, child, redex: redex_here, pruned: None });
        }
        if edges.is_empty() {
            self.nodes[id].state = NodeState::Opaque { reason: "no rule applies".into() };
        } else {
            self.nodes[id].state = NodeState::Driven { edges };
        }
        Ok(fresh)
    }

    fn give_up(&mut self, id: usize, reason: &str) -> Result<Vec<usize>, ScpError> {
        self.pruned_rules.retain(|r| r.node != id);
        self.nodes[id].state = NodeState::Opaque { reason: reason.to_string() };
        Ok(Vec::new())
    }

    fn prune_rule(&mut self, node: usize, f: &str, rule: usize, redex: Term, certificate: String) {
        self.pruned_rules.push(PrunedRule { node, function: f.to_string(), rule, redex, certificate });
    }
}

// ---------------------------------------------------------------------------
// Graph analysis

impl UnfoldGraph {
    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    /// Live children with the edge leading to them, if any.
    pub fn children(&self, id: usize) -> Vec<(usize, Option<&Edge>)> {
        match &self.nodes[id].state {
            NodeState::Driven { edges } => {
                edges.iter().filter(|e| e.pruned.is_none()).map(|e| (e.child, Some(e))).collect()
            }
            NodeState::Generalized { child, .. } => vec![(*child, None)],
            _ => Vec::new(),
        }
    }

    pub fn subtree(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut i = 0;
        while i < out.len() {
            let n = out[i];
            out.extend(self.children(n).into_iter().map(|(c, _)| c));
            i += 1;
        }
        out
    }

    /// Every reference edge below `v` points into the subtree of `v`.
    pub fn self_sufficient(&self, v: usize) -> bool {
        let sub: BTreeSet<usize> = self.subtree(v).into_iter().collect();
        sub.iter().all(|&n| match &self.nodes[n].state {
            NodeState::Folded { ancestor, .. } => sub.contains(ancestor),
            _ => true,
        })
    }

    pub fn fold_targets(&self) -> BTreeSet<usize> {
        let live: BTreeSet<usize> = self.subtree(self.root).into_iter().collect();
        live.iter()
            .filter_map(|&n| match &self.nodes[n].state {
                NodeState::Folded { ancestor, .. } => Some(*ancestor),
                _ => None,
            })
            .collect()
    }

    /// Leaves of the subtree whose value leaves the subgraph, with the edge
    /// that produced them: exits carry their value, opaque nodes `None`.
    pub fn exits(&self, v: usize) -> Vec<(usize, Option<Term>, Option<&Edge>)> {
        let mut out = Vec::new();
        let mut stack = vec![(v, None)];
        while let Some((n, via)) = stack.pop() {
            match &self.nodes[n].state {
                NodeState::Exit => out.push((n, Some(self.nodes[n].term.clone()), via)),
                NodeState::Opaque { .. } => out.push((n, None, via)),
                _ => {
                    for (c, e) in self.children(n).into_iter().rev() {
                        stack.push((c, e.or(via)));
                    }
                }
            }
        }
        out
    }

    pub fn live_nodes(&self) -> usize {
        self.subtree(self.root).len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph unfold {\n  node [shape=box, fontname=monospace];\n");
        for n in self.subtree(self.root) {
            let node = &self.nodes[n];
            let style = match node.state {
                NodeState::Exit => ", style=rounded",
                NodeState::Opaque { .. } => ", style=dashed",
                _ => "",
            };
            let _ = writeln!(out, "  n{} [label=\"{}: {}\"{}];", n, n, escape(&print_term(&node.term)), style);
        }
        for n in self.subtree(self.root) {
            match &self.nodes[n].state {
                NodeState::Driven { edges } => {
                    for e in edges {
                        let kind = if matches!(self.nodes[e.child].state, NodeState::Exit) { "Exit" } else { "Narrow" };
                        let pruned = if e.pruned.is_some() { ", color=gray, style=dotted" } else { "" };
                        let _ = writeln!(
                            out,
                            "  n{} -> n{} [label=\"{} r{} {}\"{}];",
                            n,
                            e.child,
                            kind,
                            e.rule,
                            escape(&show_sub(&e.narrowing)),
                            pruned
                        );
                    }
                }
                NodeState::Generalized { child, substitution } => {
                    let _ = writeln!(out, "  n{} -> n{} [label=\"Narrow let {}\"];", n, child, escape(&show_sub(substitution)));
                }
                NodeState::Folded { ancestor, substitution } => {
                    let _ = writeln!(
                        out,
                        "  n{} -> n{} [style=dashed, label=\"Reference {}\"];",
                        n,
                        ancestor,
                        escape(&show_sub(substitution))
                    );
                }
                _ => {}
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn show_sub(s: &Substitution) -> String {
    let parts: Vec<String> = s.iter().map(|(v, t)| format!("{v}↦{}", print_term(t))).collect();
    format!("{{{}}}", parts.join(", "))
}

// ---------------------------------------------------------------------------
// Output formats

struct Refuter<'a> {
    p: &'a Program,
    enc: Option<ReachabilityEncoding>,
}

impl Refuter<'_> {
    fn refute(&self, targets: &[Target], opts: &FinderOptions) -> Option<FiniteModel> {
        let enc = self.enc.as_ref()?;
        if opts.deadline.is_zero() {
            return None;
        }
        let th = encode_exit_goal(self.p, enc, targets).ok()?;
        find_model(&th, opts).ok()
    }
}

impl Refuter<'_> {
    /// Exits whose driven call some small concrete run reaches.
    fn witnessed(&self, exits: &[(usize, Option<Term>, Option<Edge>)]) -> BTreeSet<usize> {
        let mut calls = BTreeSet::new();
        for th in crate::oracle::small_inputs(self.p, 4, 200) {
            calls.extend(crate::oracle::trace_redexes(self.p, th.apply_unchecked(&self.p.initial), 200));
        }
        exits
            .iter()
            .filter(|(_, _, e)| e.as_ref().is_some_and(|e| calls.iter().any(|c| instance_of(c, &e.redex).is_some())))
            .map(|x| x.0)
            .collect()
    }
}

fn edge_target(e: &Edge) -> Target {
    let Term::Call(function, patterns) = &e.redex else { unreachable!("redex is a call") };
    Target::Reaches { function: function.clone(), patterns: patterns.clone() }
}

fn show_target(e: &Edge) -> String {
    print_term(&e.redex)
}

/// The format ladder for the subgraph at `v`: refute every exit, else every
/// exit but those returning one datum, else generalize what remains.
/// Refuted exits are pruned from the graph.
fn output_format(
    g: &mut UnfoldGraph,
    v: usize,
    refuter: &Refuter<'_>,
    finder: &dyn Fn() -> FinderOptions,
    pruned: &mut Vec<PrunedExit>,
    models: &mut Vec<FiniteModel>,
) -> OutputFormat {
    let exits: Vec<(usize, Option<Term>, Option<Edge>)> =
        g.exits(v).into_iter().map(|(n, r, e)| (n, r, e.cloned())).collect();
    if exits.is_empty() {
        return OutputFormat::Empty;
    }
    // exits hit by some concrete run cannot be refuted; do not ask
    let seen = refuter.witnessed(&exits);
    let mut attempt = |keep: &dyn Fn(&Option<Term>) -> bool| -> Option<Vec<usize>> {
        let doomed: Vec<&(usize, Option<Term>, Option<Edge>)> = exits.iter().filter(|x| !keep(&x.1)).collect();
        if doomed.iter().any(|x| x.2.is_none() || seen.contains(&x.0)) {
            return None;
        }
        if doomed.is_empty() {
            return Some(Vec::new());
        }
        let targets: Vec<Target> = doomed.iter().map(|x| edge_target(x.2.as_ref().unwrap())).collect();
        let model = refuter.refute(&targets, &finder())?;
        let cert = format!("countermodel of size {}", model.size);
        models.push(model);
        for (n, r, e) in &doomed {
            pruned.push(PrunedExit {
                node: *n,
                result: r.clone(),
                target: show_target(e.as_ref().unwrap()),
                certificate: cert.clone(),
            });
        }
        Some(doomed.iter().map(|x| x.0).collect())
    };
    if let Some(gone) = attempt(&|_| false) {
        prune_exits(g, &gone);
        return OutputFormat::Empty;
    }
    let mut data: Vec<Term> = Vec::new();
    for (_, r, _) in &exits {
        if let Some(t) = r {
            if t.is_ground() && !data.contains(t) {
                data.push(t.clone());
            }
        }
    }
    for d in data {
        if let Some(gone) = attempt(&|r| r.as_ref() == Some(&d)) {
            prune_exits(g, &gone);
            return OutputFormat::Datum(d);
        }
    }
    let results: Vec<Term> = exits.iter().map(|x| x.1.clone().unwrap_or_else(|| Term::e("out"))).collect();
    if exits.iter().any(|x| x.1.is_none()) {
        return OutputFormat::Pattern(Term::e("out"));
    }
    let pattern = msg_all(&results, "out");
    if pattern.is_ground() {
        OutputFormat::Datum(pattern)
    } else {
        OutputFormat::Pattern(pattern)
    }
}

fn prune_exits(g: &mut UnfoldGraph, gone: &[usize]) {
    for n in 0..g.nodes.len() {
        if let NodeState::Driven { edges } = &mut g.nodes[n].state {
            for e in edges.iter_mut() {
                if gone.contains(&e.child) && e.pruned.is_none() {
                    e.pruned = Some("unreachable exit".into());
                }
            }
        }
    }
}

/// Output format of the exits below `v` without consulting the finder.
pub fn syntactic_format(g: &UnfoldGraph, v: usize) -> OutputFormat {
    let exits = g.exits(v);
    if exits.is_empty() {
        return OutputFormat::Empty;
    }
    if exits.iter().any(|x| x.1.is_none()) {
        return OutputFormat::Pattern(Term::e("out"));
    }
    let results: Vec<Term> = exits.into_iter().map(|x| x.1.unwrap()).collect();
    let pattern = msg_all(&results, "out");
    if pattern.is_ground() {
        OutputFormat::Datum(pattern)
    } else {
        OutputFormat::Pattern(pattern)
    }
}

// ---------------------------------------------------------------------------
// Residualization

/// Reads the graph back as a program: one function per loop entry or
/// branching node, calls along references, pruned branches dropped.
pub fn residualize(g: &UnfoldGraph, p: &Program) -> Result<Program, ScpError> {
    let live = g.subtree(g.root);
    if live.iter().any(|&n| g.nodes[n].state == NodeState::Open) {
        return Err(ScpError::OpenGraph);
    }
    let targets = g.fold_targets();
    let originals: BTreeSet<String> = p.functions().into_iter().map(|(f, _)| f).collect();
    let prefix = if originals.iter().any(|f| f.starts_with('f') && f[1..].parse::<usize>().is_ok()) { "r" } else { "f" };
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for &n in &live {
        if let NodeState::Driven { edges } = &g.nodes[n].state {
            let alive: Vec<&Edge> = edges.iter().filter(|e| e.pruned.is_none()).collect();
            let trivial = alive.len() == 1 && alive[0].narrowing.is_empty();
            if !alive.is_empty() && (n == g.root || targets.contains(&n) || !trivial) {
                let name = format!("{prefix}{}", names.len() + 1);
                names.insert(n, name);
            }
        }
    }
    let mut uses_originals = false;
    let mut rules = Vec::new();
    for (&n, name) in &names {
        let params = params(&g.nodes[n].term);
        let NodeState::Driven { edges } = &g.nodes[n].state else { unreachable!() };
        for e in edges.iter().filter(|e| e.pruned.is_none()) {
            let lhs = Term::call(name.clone(), params.iter().map(|x| e.narrowing.apply_unchecked(x)).collect());
            let rhs = expr(g, e.child, &names, &mut uses_originals);
            rules.push((lhs, rhs));
        }
    }
    let start = expr(g, g.root, &names, &mut uses_originals);
    if uses_originals {
        rules.extend(p.rules.iter().map(|r| (r.lhs.clone(), r.rhs.clone())));
    }
    Program::new(start, rules, p.alphabet.clone()).map_err(|e| ScpError::Residual(e.to_string()))
}

fn params(t: &Term) -> Vec<Term> {
    vars(t).order.into_iter().map(Term::Var).collect()
}

fn expr(g: &UnfoldGraph, n: usize, names: &BTreeMap<usize, String>, originals: &mut bool) -> Term {
    let node = &g.nodes[n];
    if let Some(name) = names.get(&n) {
        return Term::call(name.clone(), params(&node.term));
    }
    match &node.state {
        NodeState::Exit => node.term.clone(),
        NodeState::Folded { ancestor, substitution } => substitution.apply_unchecked(&expr(g, *ancestor, names, originals)),
        NodeState::Generalized { child, substitution } => substitution.apply_unchecked(&expr(g, *child, names, originals)),
        NodeState::Driven { edges } => match edges.iter().find(|e| e.pruned.is_none()) {
            Some(e) => expr(g, e.child, names, originals),
            None => {
                *originals = true;
                node.term.clone()
            }
        },
        NodeState::Opaque { .. } => {
            *originals = true;
            node.term.clone()
        }
        NodeState::Open | NodeState::Removed => unreachable!("closed live graph"),
    }
}

// ---------------------------------------------------------------------------

/// Drives the program's start term into a closed graph and reads back an
/// equivalent residual program.
pub fn supercompile(p: &Program, opts: &ScpOptions) -> Result<ScpResult, ScpError> {
    let started = Instant::now();
    let mut taken: BTreeSet<String> = vars(&p.initial).order.into_iter().map(|v| v.name).collect();
    for r in &p.rules {
        taken.extend(vars(&r.lhs).order.into_iter().map(|v| v.name));
    }
    let mut d = Driver {
        p,
        opts,
        started,
        nodes: Vec::new(),
        pruned_rules: Vec::new(),
        gen_prefix: fresh_prefix(&taken, "g"),
        gen_count: 0,
        generalizations: 0,
        created: 0,
        models: Vec::new(),
    };
    let root = d.add(p.initial.clone(), None)?;
    d.run(root)?;
    let mut graph = UnfoldGraph { nodes: d.nodes, root };
    let pruned_rules: Vec<PrunedRule> = d
        .pruned_rules
        .into_iter()
        .filter(|r| graph.nodes[r.node].state != NodeState::Removed)
        .collect();
    let mut models = d.models;
    let refuter = Refuter {
        p,
        enc: if opts.use_fcm { encode_program_overapprox(p, &opts.encode).ok() } else { None },
    };
    let finder = || {
        let left = opts.deadline.checked_sub(started.elapsed()).unwrap_or_default();
        FinderOptions { deadline: opts.fcm.deadline.min(left), ..opts.fcm.clone() }
    };
    let mut pruned_exits = Vec::new();
    let format = output_format(&mut graph, root, &refuter, &finder, &mut pruned_exits, &mut models);
    let loop_formats = graph
        .fold_targets()
        .into_iter()
        .filter(|&v| v != root && graph.self_sufficient(v))
        .map(|v| (v, syntactic_format(&graph, v)))
        .collect();
    let residual = residualize(&graph, p)?;
    let folds = graph
        .subtree(root)
        .iter()
        .filter(|&&n| matches!(graph.nodes[n].state, NodeState::Folded { .. }))
        .count();
    let report = ScpReport {
        nodes: graph.live_nodes(),
        generalizations: d.generalizations,
        folds,
        pruned_rules,
        pruned_exits,
        format,
        loop_formats,
        residual_rules: residual.rules.len(),
        models,
    };
    Ok(ScpResult { graph, residual, report })
}

impl ScpReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes: {}", self.nodes);
        let _ = writeln!(out, "generalizations: {}", self.generalizations);
        let _ = writeln!(out, "folds: {}", self.folds);
        for r in &self.pruned_rules {
            let _ = writeln!(out, "pruned rule {} of {} at node {}: {}", r.rule, r.function, r.node, r.certificate);
        }
        for e in &self.pruned_exits {
            let _ = writeln!(out, "pruned exit at node {} (reaching {}): {}", e.node, e.target, e.certificate);
        }
        for (v, f) in &self.loop_formats {
            let _ = writeln!(out, "loop at node {v}: format {f}");
        }
        let _ = writeln!(out, "format: {}", self.format);
        let _ = writeln!(out, "residual rules: {}", self.residual_rules);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::eval;
    use crate::syntax::{parse_program, parse_term};

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn corpus(name: &str) -> Program {
        let path = format!("{}/corpus/{name}", env!("CARGO_MANIFEST_DIR"));
        parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn whistle_examples() {
        assert!(embeds(&t("g(e.ps, 'A', 'A')"), &t("g(e.ps1, ('h':'A'), ('h':'A'))")));
        assert!(!embeds(&t("f('a')"), &t("f('b')")));
        assert!(embeds(&t("f(e.x)"), &t("f(e.x)")));
        assert!(embeds(&t("F(e.n, 'b', 'a')"), &t("F(e.m, 'ba', 'aba')")));
        assert!(!embeds(&t("F(e.n, 'b', 'a')"), &t("F(e.m, 'a', 'ba')")));
    }

    #[test]
    fn generalization_shares_variables() {
        let a = t("g(e.ps, 'A', 'A')");
        let b = t("g(e.ps1, ('h':'A'), ('h':'A'))");
        let mut gen = Generalizer::new("v");
        let g = gen.msg(&a, &b).unwrap();
        assert_eq!(g, t("g(e.v1, t.v2, t.v2)"));
        assert_eq!(gen.left.apply_unchecked(&g), a);
        assert_eq!(gen.right.apply_unchecked(&g), b);
        let mut gen = Generalizer::new("v");
        let g = gen.msg(&t("F(e.n, 'b', 'a')"), &t("F(e.m, 'ba', 'aba')")).unwrap();
        assert_eq!(g, t("F(e.v1, 'b':e.v2, 'a':e.v3)"));
    }

    #[test]
    fn repeated_variables_example() {
        let p = corpus("ex5.l");
        let r = supercompile(&p, &ScpOptions::default()).unwrap();
        assert_eq!(r.residual.rules.len(), 1, "{}", crate::syntax::print_program(&r.residual));
        assert_eq!(r.report.pruned_rules.len(), 1);
        assert_eq!(r.report.pruned_rules[0].rule, 1);
    }

    #[test]
    fn equal_trees_give_empty_function() {
        for name in ["g.l", "f.l"] {
            let r = supercompile(&corpus(name), &ScpOptions::default()).unwrap();
            assert_eq!(r.report.format, OutputFormat::Empty, "{name}\n{}", r.report.render());
        }
    }

    #[test]
    fn fibonacci_residual_is_equivalent() {
        let p = corpus("fib.l");
        let r = supercompile(&p, &ScpOptions::default()).unwrap();
        assert!(r.graph.self_sufficient(r.graph.root));
        for k in 0..10 {
            let th = Substitution::from_pairs([(Var::e("n"), Term::word(&"I".repeat(k)))]).unwrap();
            assert_eq!(eval(&p, &th, 10_000).value(), eval(&r.residual, &th, 10_000).value());
        }
    }

    #[test]
    fn fibonacci_tests_have_format_true() {
        for name in ["fibB.l", "fibA.l"] {
            let p = corpus(name);
            let r = supercompile(&p, &ScpOptions::default()).unwrap();
            assert_eq!(r.report.format, OutputFormat::Datum(Term::ch('T')), "{name}\n{}", r.report.render());
            for (_, value, _) in r.graph.exits(r.graph.root) {
                assert!(r.report.format.admits(&value.unwrap()));
            }
        }
    }
}
