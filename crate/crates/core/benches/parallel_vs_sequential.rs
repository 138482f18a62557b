use std::hint::black_box;
use std::path::PathBuf;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use superfcm::finder::{find_model, FinderOptions};
use superfcm::fol::{encode_exit_goal, encode_program_overapprox, EncodeOptions, FoTheory, Target};
use superfcm::interp::{eval_batch, eval_batch_sequential};
use superfcm::program::Program;
use superfcm::syntax::parse_program;
use superfcm::term::{Substitution, Term, Var};

fn corpus(name: &str) -> Program {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name);
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn goal(file: &str, target: &str, project: bool) -> FoTheory {
    let p = corpus(file);
    let enc = encode_program_overapprox(&p, &EncodeOptions { project_counters: project }).unwrap();
    encode_exit_goal(&p, &enc, &[Target::parse(target).unwrap()]).unwrap()
}

fn finder(c: &mut Criterion) {
    let mut group = c.benchmark_group("find_model");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    let theories = [
        ("fibtest B", goal("fibtest.l", "B='F'", false)),
        ("fib aaa", goal("fib.l", "F(e.n, e.p:'aaa':e.q, e.r)", true)),
    ];
    for (name, th) in &theories {
        for parallel in [true, false] {
            let opts = FinderOptions { max_size: 16, deadline: Duration::from_secs(120), parallel, ..Default::default() };
            let label = format!("{name}/{}", if parallel { "parallel" } else { "sequential" });
            group.bench_function(label, |b| b.iter(|| find_model(black_box(th), &opts).unwrap()));
        }
    }
    group.finish();
}

fn interpreter(c: &mut Criterion) {
    let p = corpus("fib.l");
    let inputs: Vec<Substitution> = (0..256)
        .map(|k| Substitution::from_pairs([(Var::e("n"), Term::word(&"I".repeat(k % 24)))]).unwrap())
        .collect();
    let mut group = c.benchmark_group("eval_batch");
    group.bench_function("parallel", |b| b.iter(|| eval_batch(&p, black_box(&inputs), 10_000)));
    group.bench_function("sequential", |b| b.iter(|| eval_batch_sequential(&p, black_box(&inputs), 10_000)));
    group.finish();
}

criterion_group!(benches, finder, interpreter);
criterion_main!(benches);
