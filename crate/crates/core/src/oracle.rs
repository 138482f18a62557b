//! Independent, brute-force checks: exhaustive input enumeration, a
//! breadth-first search over the unordered rewriting relation, a naive
//! Markov matcher, and random program generation.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::interp::{nd_step, redex, step};
use crate::program::Program;
use crate::term::{vars, Substitution, Term, Var, VarKind};

/// All words over `alphabet` of length at most `max_len`, shortest first.
pub fn words(alphabet: &[char], max_len: usize) -> Vec<Term> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for &c in alphabet {
                let mut v: Vec<char> = w.clone();
                v.push(c);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out.into_iter().map(|w| Term::word(&w.into_iter().collect::<String>())).collect()
}

/// Object terms of size at most `max_size` over `alphabet`, with
/// parentheses, shortest first.
pub fn data(alphabet: &[char], max_size: usize) -> Vec<Term> {
    // by_size[k]: sequences of exact size k
    let mut by_size: Vec<Vec<Vec<Term>>> = vec![vec![Vec::new()]];
    for k in 1..=max_size {
        let mut here = Vec::new();
        for &c in alphabet {
            for rest in &by_size[k - 1] {
                let mut v = vec![Term::Char(c)];
                v.extend(rest.iter().cloned());
                here.push(v);
            }
        }
        // a parenthesis of size j+1 followed by a sequence of size k-j-1
        for j in 0..k {
            for inner in &by_size[j] {
                for rest in &by_size[k - 1 - j] {
                    let mut v = vec![Term::paren(Term::from_items(inner.clone()))];
                    v.extend(rest.iter().cloned());
                    here.push(v);
                }
            }
        }
        by_size.push(here);
    }
    by_size.into_iter().flatten().map(Term::from_items).collect()
}

fn values_for(kind: VarKind, alphabet: &[char], max_len: usize) -> Vec<Term> {
    match kind {
        VarKind::E => words(alphabet, max_len),
        VarKind::S | VarKind::T => alphabet.iter().map(|&c| Term::Char(c)).collect(),
    }
}

/// Substitutions for the start term's variables, drawing e-variables from
/// words of growing length, at most `limit` of them.
pub fn small_inputs(p: &Program, max_len: usize, limit: usize) -> Vec<Substitution> {
    let alphabet: Vec<char> = p.alphabet.iter().copied().collect();
    let vs = vars(&p.initial).order;
    let mut out = vec![Substitution::new()];
    for v in &vs {
        let vals = values_for(v.kind, &alphabet, max_len);
        let mut next = Vec::new();
        'outer: for s in &out {
            for val in &vals {
                let mut s2 = s.clone();
                s2.bind_unchecked(v.clone(), val.clone());
                next.push(s2);
                if next.len() >= limit {
                    break 'outer;
                }
            }
        }
        out = next;
    }
    out
}

const TRACE_MAX_SIZE: usize = 4096;

/// Calls reduced along the deterministic run from `start`. The run is cut
/// short once the state outgrows `TRACE_MAX_SIZE`, since data can double
/// at every step.
pub fn trace_redexes(p: &Program, start: Term, fuel: u64) -> Vec<Term> {
    let mut state = start;
    let mut out = Vec::new();
    for _ in 0..fuel {
        if state.size() > TRACE_MAX_SIZE {
            break;
        }
        let Some(call) = redex(&state).cloned() else { break };
        out.push(call);
        match step(p, &state) {
            Some(next) => state = next,
            None => break,
        }
    }
    out
}

/// States reachable under the unordered relation within `depth` steps.
pub fn bfs_states(p: &Program, starts: &[Term], depth: usize, max_states: usize) -> BTreeSet<Term> {
    let mut seen: BTreeSet<Term> = starts.iter().cloned().collect();
    let mut queue: VecDeque<(Term, usize)> = starts.iter().map(|t| (t.clone(), 0)).collect();
    while let Some((s, d)) = queue.pop_front() {
        if d == depth || seen.len() >= max_states {
            continue;
        }
        for n in nd_step(p, &s) {
            if seen.insert(n.clone()) {
                queue.push_back((n, d + 1));
            }
        }
    }
    seen
}

/// Calls of `f` occurring anywhere in `t`.
pub fn calls_of<'a>(t: &'a Term, f: &str, out: &mut Vec<&'a Term>) {
    match t {
        Term::Call(g, args) => {
            if g == f {
                out.push(t);
            }
            for a in args {
                calls_of(a, f, out);
            }
        }
        Term::Paren(inner) => calls_of(inner, f, out),
        Term::Concat(items) => items.iter().for_each(|x| calls_of(x, f, out)),
        _ => {}
    }
}

/// Markov matching by plain enumeration of e-variable lengths in order,
/// written without the matcher's machinery.
pub fn naive_markov(values: &[Term], patterns: &[Term]) -> Option<Substitution> {
    if values.len() != patterns.len() {
        return None;
    }
    let mut sub = Substitution::new();
    if naive_args(patterns, values, 0, &mut sub) {
        Some(sub)
    } else {
        None
    }
}

fn naive_args(ps: &[Term], vs: &[Term], i: usize, sub: &mut Substitution) -> bool {
    if i == ps.len() {
        return true;
    }
    let snapshot = sub.clone();
    let ok = naive_seq(ps[i].items(), vs[i].items(), sub, &mut |sub| naive_args(ps, vs, i + 1, sub));
    if !ok {
        *sub = snapshot;
    }
    ok
}

fn naive_seq(p: &[Term], v: &[Term], sub: &mut Substitution, k: &mut dyn FnMut(&mut Substitution) -> bool) -> bool {
    let Some((head, rest)) = p.split_first() else {
        return v.is_empty() && k(sub);
    };
    let try_bind = |var: &Var, value: Term, n: usize, sub: &mut Substitution, k: &mut dyn FnMut(&mut Substitution) -> bool| {
        let before = sub.clone();
        sub.bind_unchecked(var.clone(), value);
        if naive_seq(rest, &v[n..], sub, k) {
            return true;
        }
        *sub = before;
        false
    };
    match head {
        Term::Char(c) => matches!(v.first(), Some(Term::Char(d)) if c == d) && naive_seq(rest, &v[1..], sub, k),
        Term::Paren(inner) => match v.first() {
            Some(Term::Paren(w)) => {
                let inner_items = inner.items().to_vec();
                let w_items = w.items().to_vec();
                naive_seq(&inner_items, &w_items, sub, &mut |sub| naive_seq(rest, &v[1..], sub, k))
            }
            _ => false,
        },
        Term::Var(var) => {
            if let Some(val) = sub.get(var).cloned() {
                let n = val.items().len();
                return v.len() >= n && v[..n] == *val.items() && naive_seq(rest, &v[n..], sub, k);
            }
            match var.kind {
                VarKind::S => match v.first() {
                    Some(x @ Term::Char(_)) => try_bind(var, x.clone(), 1, sub, k),
                    _ => false,
                },
                VarKind::T => match v.first() {
                    Some(x @ (Term::Char(_) | Term::Paren(_))) => try_bind(var, x.clone(), 1, sub, k),
                    _ => false,
                },
                VarKind::E => {
                    (0..=v.len()).any(|n| try_bind(var, Term::from_items(v[..n].to_vec()), n, sub, k))
                }
            }
        }
        _ => false,
    }
}

/// A random passive term over `alphabet` with the given variables.
pub fn random_passive<R: Rng>(rng: &mut R, alphabet: &[char], pool: &[Var], budget: usize) -> Term {
    let mut items = Vec::new();
    let n = rng.gen_range(0..=budget);
    for _ in 0..n {
        match rng.gen_range(0..6) {
            0..=2 => items.push(Term::Char(*alphabet.choose(rng).unwrap())),
            3 if !pool.is_empty() => items.push(Term::Var(pool.choose(rng).unwrap().clone())),
            4 if budget > 1 => items.push(Term::paren(random_passive(rng, alphabet, pool, budget / 2))),
            _ => items.push(Term::Char(*alphabet.choose(rng).unwrap())),
        }
    }
    Term::seq(items)
}

/// A random ground object of at most `size` items.
pub fn random_data<R: Rng>(rng: &mut R, alphabet: &[char], size: usize) -> Term {
    random_passive(rng, alphabet, &[], size)
}

/// Random program in flat tail form: every right-hand side is passive or a
/// single call with passive arguments. The start term calls the first
/// function on variables.
pub fn random_flat_program<R: Rng>(rng: &mut R) -> Program {
    let alphabet = ['a', 'b'];
    let nfun = rng.gen_range(1..=3);
    let arity: Vec<usize> = (0..nfun).map(|_| rng.gen_range(1..=2)).collect();
    let name = |i: usize| format!("h{i}");
    let mut rules = Vec::new();
    for f in 0..nfun {
        let nrules = rng.gen_range(1..=3);
        for r in 0..nrules {
            let pool: Vec<Var> = (0..3).map(|i| Var::e(format!("x{i}"))).collect();
            let mut used = Vec::new();
            let mut args = Vec::new();
            for _ in 0..arity[f] {
                // patterns: a character prefix or suffix around one variable
                let v = pool[rng.gen_range(0..pool.len())].clone();
                let pre = random_passive(rng, &alphabet, &[], 1);
                let post = if rng.gen_bool(0.3) { random_passive(rng, &alphabet, &[], 1) } else { Term::Empty };
                let shape = if rng.gen_bool(0.15) && r + 1 < nrules {
                    Term::word(if rng.gen_bool(0.5) { "a" } else { "" })
                } else {
                    used.push(v.clone());
                    Term::seq([pre, Term::Var(v), post])
                };
                args.push(shape);
            }
            let lhs = Term::call(name(f), args);
            let rhs = if rng.gen_bool(0.55) {
                let g = rng.gen_range(0..nfun);
                let cargs = (0..arity[g]).map(|_| random_passive(rng, &alphabet, &used, 3)).collect();
                Term::call(name(g), cargs)
            } else {
                random_passive(rng, &['a', 'b', 'T', 'F'], &used, 2)
            };
            rules.push((lhs, rhs));
        }
    }
    let start_args = (0..arity[0])
        .map(|i| {
            let v = Term::e(&format!("in{i}"));
            if rng.gen_bool(0.3) {
                Term::seq([Term::ch(*alphabet.choose(rng).unwrap()), v])
            } else {
                v
            }
        })
        .collect();
    let mut declared = BTreeSet::new();
    declared.extend(alphabet);
    Program::new(Term::call(name(0), start_args), rules, declared).expect("generated program is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::markov_substitution;
    use crate::syntax::parse_term;
    use crate::term::MatchStats;

    #[test]
    fn enumerations_count() {
        assert_eq!(words(&['a', 'b'], 3).len(), 15);
        // size 1: 'a' and (); size 2: six terms
        let d = data(&['a'], 2);
        assert_eq!(d.len(), 1 + 2 + 6);
        assert!(d.contains(&parse_term("('a')").unwrap()));
    }

    #[test]
    fn naive_matcher_agrees() {
        let pats = [parse_term("e.x:'b':e.y").unwrap(), parse_term("e.y").unwrap()];
        let vals = [Term::word("abab"), Term::word("ab")];
        let m = markov_substitution(&vals, &pats, &mut MatchStats::default());
        assert_eq!(naive_markov(&vals, &pats), m);
        assert_eq!(m.unwrap().get(&Var::e("x")), Some(&Term::word("a")));
    }
}
