use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use superfcm::interp::{eval_batch, eval_batch_sequential};
use superfcm::matcher::{all_substitutions, markov_substitution};
use superfcm::oracle::{naive_markov, random_data, random_passive};
use superfcm::syntax::{parse_program, parse_term, print_term};
use superfcm::term::{MatchStats, Substitution, Term, Var};

fn passive(seed: u64, budget: usize) -> Term {
    let pool = [Var::e("x"), Var::e("y"), Var::s("c"), Var::t("u")];
    random_passive(&mut StdRng::seed_from_u64(seed), &['a', 'b'], &pool, budget)
}

proptest! {
    #[test]
    fn printing_round_trips(seed in any::<u64>(), budget in 0usize..8) {
        let t = passive(seed, budget);
        prop_assert_eq!(parse_term(&print_term(&t)).unwrap(), t);
    }

    #[test]
    fn markov_is_the_first_naive_solution(pseed in any::<u64>(), vseed in any::<u64>()) {
        let pat = passive(pseed, 4);
        let val = random_data(&mut StdRng::seed_from_u64(vseed), &['a', 'b'], 6);
        let fast = markov_substitution(std::slice::from_ref(&val), std::slice::from_ref(&pat), &mut MatchStats::default());
        prop_assert_eq!(&fast, &naive_markov(std::slice::from_ref(&val), std::slice::from_ref(&pat)));
        let all = all_substitutions(std::slice::from_ref(&val), std::slice::from_ref(&pat));
        prop_assert_eq!(fast.is_some(), !all.is_empty());
        for s in all {
            prop_assert_eq!(s.apply(&pat).unwrap(), val.clone());
        }
    }

    #[test]
    fn batch_evaluation_is_order_independent(ns in prop::collection::vec(0usize..12, 1..20)) {
        let p = parse_program(
            "start: Fib(e.n); Fib(e.n) = F(e.n, 'b', 'a'); F(ε, e.xs, e.ys) = (e.xs):(e.ys); \
             F('I':e.ns, e.xs, e.ys) = F(e.ns, e.ys, e.xs:e.ys);",
        )
        .unwrap();
        let inputs: Vec<Substitution> = ns
            .iter()
            .map(|&k| Substitution::from_pairs([(Var::e("n"), Term::word(&"I".repeat(k)))]).unwrap())
            .collect();
        let a: Vec<_> = eval_batch(&p, &inputs, 1000).into_iter().map(|e| e.result).collect();
        let b: Vec<_> = eval_batch_sequential(&p, &inputs, 1000).into_iter().map(|e| e.result).collect();
        prop_assert_eq!(a, b);
    }
}
