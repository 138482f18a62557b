//! The abstract machine: first-matching-rule, call-by-value evaluation.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::matcher::{all_substitutions, markov_substitution};
use crate::program::Program;
use crate::term::{MatchStats, Substitution, Term};

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EvalResult {
    /// The state became an object term.
    Value { value: Term },
    /// No rule matches the innermost-leftmost call.
    Stuck { state: Term, call: Term },
    FuelExhausted { state: Term, steps: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Evaluation {
    pub result: EvalResult,
    /// Rewriting steps performed.
    pub steps: u64,
    /// Elementary matching operations performed across all steps.
    pub work: u64,
}

impl Evaluation {
    pub fn value(&self) -> Option<&Term> {
        match &self.result {
            EvalResult::Value { value } => Some(value),
            _ => None,
        }
    }
}

/// Leftmost-innermost call whose arguments are all passive.
pub fn redex(t: &Term) -> Option<&Term> {
    match t {
        Term::Call(_, args) => args.iter().find_map(redex).or(Some(t)),
        Term::Paren(inner) => redex(inner),
        Term::Concat(items) => items.iter().find_map(redex),
        _ => None,
    }
}

/// Rebuilds `t` with its redex replaced by `f(redex)`; `None` if there is no
/// redex or `f` declines.
pub fn replace_redex(t: &Term, f: &mut dyn FnMut(&str, &[Term]) -> Option<Term>) -> Option<Term> {
    match t {
        Term::Call(name, args) => {
            for (i, a) in args.iter().enumerate() {
                if redex(a).is_some() {
                    let new = replace_redex(a, f)?;
                    let mut args = args.clone();
                    args[i] = new;
                    return Some(Term::Call(name.clone(), args));
                }
            }
            f(name, args)
        }
        Term::Paren(inner) => replace_redex(inner, f).map(Term::paren),
        Term::Concat(items) => {
            let i = items.iter().position(|x| redex(x).is_some())?;
            let new = replace_redex(&items[i], f)?;
            let mut parts = items.clone();
            parts[i] = new;
            Some(Term::seq(parts))
        }
        _ => None,
    }
}

fn step_counted(p: &Program, state: &Term, stats: &mut MatchStats) -> Option<Term> {
    replace_redex(state, &mut |f, args| {
        p.rules_for(f).find_map(|r| {
            markov_substitution(args, r.patterns(), stats).map(|sub| sub.apply_unchecked(&r.rhs))
        })
    })
}

/// One step of the ordered rewriting relation.
pub fn step(p: &Program, state: &Term) -> Option<Term> {
    step_counted(p, state, &mut MatchStats::default())
}

/// Runs `τθ` to a value, a stuck state, or fuel exhaustion.
pub fn eval(p: &Program, theta: &Substitution, fuel: u64) -> Evaluation {
    eval_term(p, theta.apply_unchecked(&p.initial), fuel)
}

pub fn eval_term(p: &Program, start: Term, fuel: u64) -> Evaluation {
    let mut state = start;
    let mut stats = MatchStats::default();
    let mut steps = 0;
    loop {
        let Some(call) = redex(&state).cloned() else {
            return Evaluation { result: EvalResult::Value { value: state }, steps, work: stats.work };
        };
        if steps >= fuel {
            return Evaluation { result: EvalResult::FuelExhausted { state, steps }, steps, work: stats.work };
        }
        match step_counted(p, &state, &mut stats) {
            Some(next) => {
                state = next;
                steps += 1;
            }
            None => return Evaluation { result: EvalResult::Stuck { state, call }, steps, work: stats.work },
        }
    }
}

/// All successors under unordered rule choice and every matching
/// substitution (the non-deterministic overapproximation).
pub fn nd_step(p: &Program, state: &Term) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    let mut succ = Vec::new();
    replace_redex(state, &mut |f, args| {
        for r in p.rules_for(f) {
            for sub in all_substitutions(args, r.patterns()) {
                succ.push(sub.apply_unchecked(&r.rhs));
            }
        }
        None
    });
    for s in succ {
        let mut once = Some(s);
        if let Some(t) = replace_redex(state, &mut |_, _| once.take()) {
            out.insert(t);
        }
    }
    out
}

/// Evaluates many inputs; parallel when the `parallel` feature is enabled.
pub fn eval_batch(p: &Program, inputs: &[Substitution], fuel: u64) -> Vec<Evaluation> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        inputs.par_iter().map(|th| eval(p, th, fuel)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        eval_batch_sequential(p, inputs, fuel)
    }
}

pub fn eval_batch_sequential(p: &Program, inputs: &[Substitution], fuel: u64) -> Vec<Evaluation> {
    inputs.iter().map(|th| eval(p, th, fuel)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_program, parse_term};
    use crate::term::Var;

    const FIB: &str = "start: Fib(e.n);
        Fib(e.n) = F(e.n, 'b', 'a');
        F(ε, e.xs, e.ys) = (e.xs):(e.ys);
        F('I':e.ns, e.xs, e.ys) = F(e.ns, e.ys, e.xs:e.ys);";

    const FIB_B: &str = "start: B(Fib(e.n));
        Fib(e.n) = F(e.n, 'b', 'a');
        F(ε, e.xs, e.ys) = (e.xs):(e.ys);
        F('I':e.ns, e.xs, e.ys) = F(e.ns, e.ys, e.xs:e.ys);
        B((e.xs:'bb'):(e.ys)) = 'F';
        B((e.xs:'b'):('b':e.ys)) = 'F';
        B((e.xs):(e.ys)) = 'T';";

    fn bind(n: &str) -> Substitution {
        Substitution::from_pairs([(Var::e("n"), Term::word(n))]).unwrap()
    }

    #[test]
    fn single_steps() {
        let p = parse_program(FIB).unwrap();
        let s = step(&p, &parse_term("Fib('III')").unwrap()).unwrap();
        assert_eq!(s, parse_term("F('III', 'b', 'a')").unwrap());
        let s = step(&p, &parse_term("F(ε, 'b', 'a')").unwrap()).unwrap();
        assert_eq!(s, parse_term("('b'):('a')").unwrap());
        let q = parse_program(FIB_B).unwrap();
        let s = step(&q, &parse_term("B(('ab'):('ab'))").unwrap()).unwrap();
        assert_eq!(s, Term::ch('T'));
        let s = step(&q, &parse_term("B(('ab'):('ba'))").unwrap()).unwrap();
        assert_eq!(s, Term::ch('F'));
    }

    #[test]
    fn fibonacci_values() {
        let p = parse_program(FIB).unwrap();
        let ev = eval(&p, &bind("III"), DEFAULT_FUEL);
        assert_eq!(ev.value(), Some(&parse_term("('aba'):('baaba')").unwrap()));
        let q = parse_program(FIB_B).unwrap();
        assert_eq!(eval(&q, &bind("II"), DEFAULT_FUEL).value(), Some(&Term::ch('T')));
    }

    #[test]
    fn stuck_and_fuel() {
        let g = parse_program(
            "start: g(e.ps, 'A', 'A');
             g(ε, ('h':e.xs), 'A') = 'A';
             g(ε, 'A', ('h':e.ys)) = 'A';
             g('b':e.ps, e.xs, e.ys) = g(e.ps, ('h':e.xs), ('h':e.ys));
             g('c':e.ps, ('h':e.xs), ('h':e.ys)) = g(e.ps, e.xs, e.ys);",
        )
        .unwrap();
        let th = Substitution::from_pairs([(Var::e("ps"), Term::Empty)]).unwrap();
        assert!(matches!(eval(&g, &th, 100).result, EvalResult::Stuck { .. }));
        let lp = parse_program("start: f(); f() = f();").unwrap();
        let ev = eval(&lp, &Substitution::new(), 10);
        assert!(matches!(ev.result, EvalResult::FuelExhausted { steps: 10, .. }));
    }

    #[test]
    fn nondeterministic_successors() {
        let p = parse_program("f(e.x:e.w:e.y, e.w) = 'A'; f(e.x, e.z) = 'B';").unwrap();
        let succ = nd_step(&p, &parse_term("f('abcabc', 'bc')").unwrap());
        assert_eq!(succ.len(), 2);
        assert!(nd_step(&p, &parse_term("g()").unwrap()).is_empty());
        let fib = parse_program(FIB).unwrap();
        let succ = nd_step(&fib, &parse_term("Fib('I')").unwrap());
        assert_eq!(succ.into_iter().collect::<Vec<_>>(), vec![parse_term("F('I', 'b', 'a')").unwrap()]);
    }
}
