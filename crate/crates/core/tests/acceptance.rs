//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use superfcm::finder::{check_model, find_model, model_to_automaton, FinderOptions, FiniteModel};
use superfcm::fol::{
    encode_equations_goal, encode_exit_goal, encode_program_overapprox, encode_term, reach_pred, EncodeOptions,
    FoTheory, Target,
};
use superfcm::interp::{eval, redex, EvalResult, DEFAULT_FUEL};
use superfcm::matcher::{all_substitutions, cheap_no_solution, markov_substitution, Certificate, NoSolVerdict};
use superfcm::oracle::{bfs_states, naive_markov, random_data, random_flat_program, random_passive, words};
use superfcm::program::Program;
use superfcm::scp::{supercompile, OutputFormat, ScpOptions, ScpResult};
use superfcm::syntax::{parse_program, parse_term, print_term};
use superfcm::term::{instance_of, vars, MatchStats, Substitution, Term, Var, VarKind};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

fn corpus(name: &str) -> Program {
    parse_program(&std::fs::read_to_string(corpus_path(name)).unwrap()).unwrap()
}

fn t(s: &str) -> Term {
    parse_term(s).unwrap()
}

fn bind(pairs: &[(Var, Term)]) -> Substitution {
    Substitution::from_pairs(pairs.iter().cloned()).unwrap()
}

/// A model together with the theory it refutes and the predicate whose
/// automaton is examined.
struct Produced {
    label: String,
    model: FiniteModel,
    theory: FoTheory,
    program: Option<Program>,
    kept: Option<std::collections::BTreeMap<String, Vec<usize>>>,
    /// Argument tuples that instantiate the target; must be rejected.
    targets: Vec<(String, Vec<Term>)>,
}

#[derive(Default)]
struct Shared {
    models: Vec<Produced>,
}

// ---------------------------------------------------------------------------

fn fib_words(n: usize) -> Vec<String> {
    let mut w = vec!["b".to_string(), "a".to_string()];
    while w.len() < n {
        let k = w.len();
        w.push(format!("{}{}", w[k - 2], w[k - 1]));
    }
    w
}

fn c1_interpreter(_: &mut Shared) -> Check {
    let p = corpus("fib.l");
    let started = Instant::now();
    let n = Var::e("n");
    let ev = eval(&p, &bind(&[(n.clone(), Term::word("III"))]), DEFAULT_FUEL);
    ensure(ev.value() == Some(&t("('aba'):('baaba')")), || format!("Fib('III') = {:?}", ev.result))?;
    let w = fib_words(10);
    assert_eq!(&w[..7], ["b", "a", "ba", "aba", "baaba", "ababaaba", "baabaababaaba"]);
    for k in 0..8 {
        let ev = eval(&p, &bind(&[(n.clone(), Term::word(&"I".repeat(k)))]), DEFAULT_FUEL);
        let want = Term::seq([Term::paren(Term::word(&w[k])), Term::paren(Term::word(&w[k + 1]))]);
        ensure(ev.value() == Some(&want), || format!("Fib(I^{k}) = {:?}", ev.value().map(print_term)))?;
    }
    let took = started.elapsed();
    ensure(took < Duration::from_secs(1), || format!("took {took:?}"))?;
    Ok(format!("pairs (w_n, w_n+1) for n = 0..7 match, w_7 = {}, {took:?}", w[7]))
}

fn c2_matching(_: &mut Shared) -> Check {
    let started = Instant::now();
    let ex3 = markov_substitution(&[Term::word("abcabc"), Term::word("bc")], &[t("e.x:e.w:e.y"), t("e.w")], &mut MatchStats::default());
    let want3 = bind(&[(Var::e("x"), Term::word("a")), (Var::e("w"), Term::word("bc")), (Var::e("y"), Term::word("abc"))]);
    ensure(ex3.as_ref() == Some(&want3), || format!("repeated-variable match gave {ex3:?}"))?;
    let ex4 = markov_substitution(&[Term::word("abacad")], &[t("e.x:'a':e.y:'a':e.z")], &mut MatchStats::default());
    let want4 = bind(&[(Var::e("x"), Term::Empty), (Var::e("y"), Term::word("b")), (Var::e("z"), Term::word("cad"))]);
    ensure(ex4.as_ref() == Some(&want4), || format!("two-separator match gave {ex4:?}"))?;
    let all3 = all_substitutions(&[Term::word("abcabc"), Term::word("bc")], &[t("e.x:e.w:e.y"), t("e.w")]);
    ensure(all3.len() == 2, || format!("repeated-variable system has {} matches", all3.len()))?;
    let all4 = all_substitutions(&[Term::word("abacad")], &[t("e.x:'a':e.y:'a':e.z")]);
    ensure(all4.len() == 3, || format!("two-separator system has {} matches", all4.len()))?;

    let mut rng = StdRng::seed_from_u64(2);
    let (mut matched, mut systems) = (0, 0);
    while systems < 1000 {
        let k = rng.gen_range(1..=3);
        let alphabet: Vec<char> = ['a', 'b', 'c'][..k].to_vec();
        let pool = [Var::e("x"), Var::e("y"), Var::s("c"), Var::t("u"), Var::e("z")];
        let arity = rng.gen_range(1..=2);
        let pats: Vec<Term> = (0..arity).map(|_| random_passive(&mut rng, &alphabet, &pool, 4)).collect();
        let vals: Vec<Term> = if rng.gen_bool(0.6) {
            // an instance of the patterns, so that matches are common
            let mut sub = Substitution::new();
            for v in vars(&Term::seq(pats.iter().map(|p| Term::paren(p.clone())))).order {
                let val = match v.kind {
                    VarKind::E => random_data(&mut rng, &alphabet, 3),
                    VarKind::S => Term::Char(alphabet[rng.gen_range(0..k)]),
                    VarKind::T => {
                        if rng.gen_bool(0.5) {
                            Term::Char(alphabet[rng.gen_range(0..k)])
                        } else {
                            Term::paren(random_data(&mut rng, &alphabet, 2))
                        }
                    }
                };
                sub.bind(v, val).unwrap();
            }
            pats.iter().map(|p| sub.apply(p).unwrap()).collect()
        } else {
            (0..arity).map(|_| random_data(&mut rng, &alphabet, 4)).collect()
        };
        let total: usize = vals.iter().map(Term::size).sum();
        if total > 8 {
            continue;
        }
        systems += 1;
        let fast = markov_substitution(&vals, &pats, &mut MatchStats::default());
        let slow = naive_markov(&vals, &pats);
        if fast.is_some() {
            matched += 1;
        }
        ensure(fast == slow, || {
            format!(
                "disagreement on {:?} against {:?}: {fast:?} vs {slow:?}",
                vals.iter().map(print_term).collect::<Vec<_>>(),
                pats.iter().map(print_term).collect::<Vec<_>>()
            )
        })?;
    }
    let took = started.elapsed();
    ensure(took < Duration::from_secs(30), || format!("took {took:?}"))?;
    Ok(format!("both worked matches exact; 1000 random systems agree ({matched} solvable), {took:?}"))
}

fn ex5_equation() -> Vec<(Term, Term)> {
    vec![(t("'a':e.q:'a':e.q:'b'"), t("e.q:'a':e.q:'b':e.q"))]
}

fn c3_one_step(shared: &mut Shared) -> Check {
    let eqs = ex5_equation();
    let started = Instant::now();
    let cheap = cheap_no_solution(&eqs);
    let cheap_time = started.elapsed();
    let cert = match cheap {
        Some(NoSolVerdict::Inconsistent(c @ (Certificate::Parikh { .. } | Certificate::Instantiation { .. }))) => c,
        other => return Err(format!("counting and instantiation gave {other:?}")),
    };
    let th = encode_equations_goal(&eqs);
    let started = Instant::now();
    let m = find_model(&th, &FinderOptions { max_size: 16, deadline: Duration::from_secs(60), ..Default::default() })
        .map_err(|e| format!("finder: {e}"))?;
    let fcm_time = started.elapsed();
    ensure(m.size <= 16 && fcm_time < Duration::from_secs(60), || format!("size {} in {fcm_time:?}", m.size))?;
    shared.models.push(Produced {
        label: "equation".into(),
        model: m.clone(),
        theory: th,
        program: None,
        kept: None,
        targets: Vec::new(),
    });

    let p = corpus("ex5.l");
    let r = supercompile(&p, &ScpOptions::default()).map_err(|e| e.to_string())?;
    ensure(r.residual.rules.len() == 1, || format!("residual has {} rules", r.residual.rules.len()))?;

    let mut rng = StdRng::seed_from_u64(3);
    let mut rows = Vec::new();
    for len in [10, 100, 1000] {
        let q: String = (0..len).map(|_| if rng.gen_bool(0.5) { 'a' } else { 'b' }).collect();
        let th = bind(&[(Var::e("q"), Term::word(&q))]);
        let a = eval(&p, &th, DEFAULT_FUEL);
        let b = eval(&r.residual, &th, DEFAULT_FUEL);
        ensure(a.value() == b.value(), || format!("results differ at length {len}"))?;
        rows.push((len, a.steps, a.work, b.steps, b.work));
    }
    let residual_const = rows.iter().all(|r| r.3 == rows[0].3 && r.4 == rows[0].4);
    let original_grows = rows.windows(2).all(|w| w[1].2 > w[0].2);
    let table: Vec<String> = rows
        .iter()
        .map(|(n, s0, w0, s1, w1)| format!("n={n}: original {s0} rewrites/{w0} ops, residual {s1}/{w1}"))
        .collect();
    ensure(residual_const && original_grows, || format!("cost table: {}", table.join("; ")))?;
    Ok(format!(
        "{cert} in {cheap_time:?}; countermodel size {} in {fcm_time:?}; 1-rule residual; {}",
        m.size,
        table.join("; ")
    ))
}

#[derive(serde::Deserialize)]
struct VerifyJson {
    verdict: String,
    size: Option<usize>,
    model: Option<FiniteModel>,
}

fn cli_verify(file: &str, target: &str, max: usize) -> Result<(FiniteModel, Duration), String> {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_superfcm"))
        .arg("verify")
        .arg(corpus_path(file))
        .args(["--target", target, "--max-size", &max.to_string(), "--deadline", "120", "--format", "json"])
        .output()
        .map_err(|e| e.to_string())?;
    let took = started.elapsed();
    let parsed: VerifyJson = serde_json::from_slice(&out.stdout)
        .map_err(|e| format!("verify output: {e}: {}", String::from_utf8_lossy(&out.stdout)))?;
    match (parsed.verdict.as_str(), parsed.model, parsed.size) {
        ("SAFE", Some(m), Some(n)) if n == m.size => Ok((m, took)),
        (v, _, _) => Err(format!("{target}: {v}")),
    }
}

/// Arguments (x):(y) of total size at most `size` that instantiate one of
/// the `patterns`.
fn target_instances(patterns: &[&str], size: usize) -> Vec<Vec<Term>> {
    let pats: Vec<Term> = patterns.iter().map(|p| t(p)).collect();
    let ws = words(&['I', 'a', 'b'], size - 2);
    let mut out = Vec::new();
    for x in &ws {
        for y in ws.iter().filter(|y| x.size() + y.size() + 2 <= size) {
            let arg = Term::seq([Term::paren(x.clone()), Term::paren(y.clone())]);
            if pats.iter().any(|p| instance_of(&arg, p).is_some()) {
                out.push(vec![arg]);
            }
        }
    }
    out
}

fn c4_fibonacci(shared: &mut Shared) -> Check {
    let p = corpus("fibtest.l");
    let enc = encode_program_overapprox(&p, &EncodeOptions::default()).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let goals = [
        ("B='F'", 8, ["(e.xs:'bb'):(e.ys)", "(e.xs:'b'):('b':e.ys)"], "B"),
        ("A='F'", 16, ["(e.xs:'aaa'):(e.ys)", "(e.xs:'aa'):('a':e.ys)"], "A"),
    ];
    for (target, max, bad, func) in goals {
        let (m, took) = cli_verify("fibtest.l", target, max)?;
        ensure(m.size <= max && took < Duration::from_secs(120), || format!("{target}: size {} in {took:?}", m.size))?;
        let th = encode_exit_goal(&p, &enc, &[Target::parse(target).unwrap()]).unwrap();
        notes.push(format!("{target} size {} in {took:.1?}", m.size));
        let targets = target_instances(&bad, 8).into_iter().map(|a| (reach_pred(func), a)).collect();
        shared.models.push(Produced {
            label: format!("verify {target}"),
            model: m,
            theory: th,
            program: Some(p.clone()),
            kept: Some(enc.kept.clone()),
            targets,
        });
    }

    // the substring goals on the pair generator, with counter projection
    let fib = corpus("fib.l");
    let proj = encode_program_overapprox(&fib, &EncodeOptions { project_counters: true }).unwrap();
    for (target, max, bad) in [("F(e.n, e.p:'bb':e.q, e.r)", 8, "bb"), ("F(e.n, e.p:'aaa':e.q, e.r)", 16, "aaa")] {
        let th = encode_exit_goal(&fib, &proj, &[Target::parse(target).unwrap()]).unwrap();
        let started = Instant::now();
        let m = find_model(&th, &FinderOptions { max_size: max, deadline: Duration::from_secs(120), ..Default::default() })
            .map_err(|e| format!("{target}: {e}"))?;
        let took = started.elapsed();
        ensure(m.size <= max && took < Duration::from_secs(120), || format!("{target}: size {} in {took:?}", m.size))?;
        notes.push(format!("{bad}-goal size {} in {took:.1?}", m.size));
        let mut targets = Vec::new();
        let buckets: Vec<Vec<Term>> =
            (0..=8).map(|n| words(&['I', 'a', 'b'], n).into_iter().filter(|w| w.size() == n).collect()).collect();
        for lx in bad.len()..=8 {
            for xs in buckets[lx].iter().filter(|w| print_term(w).replace(['\'', ':'], "").contains(bad)) {
                // the remaining size is split between the counter and the second word
                for ln in 0..=8 - lx {
                    for n in &buckets[ln] {
                        for ys in buckets[..=8 - lx - ln].iter().flatten() {
                            targets.push((reach_pred("F"), vec![n.clone(), xs.clone(), ys.clone()]));
                        }
                    }
                }
            }
        }
        shared.models.push(Produced {
            label: format!("{bad}-goal"),
            model: m,
            theory: th,
            program: Some(fib.clone()),
            kept: Some(proj.kept.clone()),
            targets,
        });
    }

    let w = fib_words(21);
    for i in 0..=20 {
        ensure(!w[i].contains("bb") && !w[i].contains("aaa"), || format!("w_{i} = {}", w[i]))?;
        if i < 20 {
            let joint = format!("{}{}", w[i], w[i + 1]);
            let at = w[i].len();
            for (bad, _) in [("bb", 0), ("aaa", 0)] {
                for start in at.saturating_sub(bad.len() - 1)..at {
                    ensure(!joint[start..].starts_with(bad), || format!("{bad} across w_{i}|w_{}", i + 1))?;
                }
            }
        }
    }
    notes.push("w_0..w_20 free of bb/aaa, boundaries included".into());
    Ok(notes.join("; "))
}

fn corpus_names() -> [&'static str; 8] {
    ["ex5.l", "ex5_orig.l", "f.l", "g.l", "fib.l", "fibA.l", "fibB.l", "fibtest.l"]
}

fn exits_admitted(r: &ScpResult) -> Result<usize, String> {
    let g = &r.graph;
    let mut checked = 0;
    let mut pairs = vec![(g.root, r.report.format.clone())];
    pairs.extend(r.report.loop_formats.iter().cloned());
    for (v, format) in pairs {
        for (n, value, _) in g.exits(v) {
            let Some(value) = value else {
                ensure(matches!(format, OutputFormat::Pattern(Term::Var(_))), || format!("opaque exit {n} under {format}"))?;
                continue;
            };
            ensure(format.admits(&value), || format!("exit {} at node {n} is not an instance of {format}", print_term(&value)))?;
            checked += 1;
        }
    }
    Ok(checked)
}

fn c5_formats(_: &mut Shared) -> Check {
    let mut notes = Vec::new();
    for name in ["fibB.l", "fibA.l"] {
        let r = supercompile(&corpus(name), &ScpOptions::default()).map_err(|e| e.to_string())?;
        ensure(r.report.format == OutputFormat::Datum(Term::ch('T')), || format!("{name}: format {}", r.report.format))?;
        notes.push(format!("{name}: 'T'"));
    }
    let mut total = 0;
    for name in corpus_names() {
        let r = supercompile(&corpus(name), &ScpOptions::default()).map_err(|e| e.to_string())?;
        total += exits_admitted(&r).map_err(|e| format!("{name}: {e}"))?;
    }
    notes.push(format!("{total} exits across the corpus fit their formats"));
    Ok(notes.join("; "))
}

fn c6_nonregular(_: &mut Shared) -> Check {
    let p = corpus("g.l");
    let r = supercompile(&p, &ScpOptions::default()).map_err(|e| e.to_string())?;
    ensure(r.report.format == OutputFormat::Empty, || format!("format {}", r.report.format))?;
    let mut runs = 0;
    for ps in words(&['b', 'c'], 8) {
        let ev = eval(&p, &bind(&[(Var::e("ps"), ps.clone())]), DEFAULT_FUEL);
        ensure(ev.value().is_none(), || format!("G returned a value on {}", print_term(&ps)))?;
        runs += 1;
    }
    let out = Command::new(env!("CARGO_BIN_EXE_superfcm"))
        .arg("verify")
        .arg(corpus_path("g.l"))
        .args(["--target", "g='A'", "--deadline", "10"])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
    ensure(text.starts_with("UNKNOWN"), || format!("verify on G: {text}"))?;
    Ok(format!("empty partial function; {runs} runs never return a value; verify: {text}"))
}

/// Random inputs for the start term, biased towards terminating runs.
fn random_inputs(p: &Program, rng: &mut StdRng) -> Substitution {
    let alphabet: Vec<char> = p.alphabet.iter().copied().filter(|c| !"FT".contains(*c) || p.alphabet.len() < 3).collect();
    let mut th = Substitution::new();
    for v in vars(&p.initial).order {
        let value = match v.kind {
            VarKind::E if rng.gen_bool(0.5) => {
                let c = alphabet[rng.gen_range(0..alphabet.len())];
                Term::word(&c.to_string().repeat(rng.gen_range(0..8)))
            }
            VarKind::E => random_data(rng, &alphabet, 6),
            _ => Term::Char(alphabet[rng.gen_range(0..alphabet.len())]),
        };
        th.bind(v, value).unwrap();
    }
    th
}

fn reached_redexes(p: &Program, max_data: usize) -> BTreeSet<Term> {
    let alphabet: Vec<char> = p.alphabet.iter().copied().collect();
    let vs = vars(&p.initial).order;
    let per_var = if vs.len() <= 1 { max_data } else { max_data / vs.len() };
    let pool = words(&alphabet, per_var);
    let mut starts = vec![Substitution::new()];
    for v in &vs {
        let mut next = Vec::new();
        for s in &starts {
            for w in &pool {
                let mut s2 = s.clone();
                s2.bind(v.clone(), w.clone()).unwrap();
                next.push(s2);
            }
        }
        starts = next;
    }
    let starts: Vec<Term> = starts.iter().map(|s| s.apply(&p.initial).unwrap()).collect();
    bfs_states(p, &starts, 8, 200_000).iter().filter_map(|s| redex(s).cloned()).collect()
}

fn c7_random(_: &mut Shared) -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let (mut programs, mut safe, mut pruned_rules, mut pruned_exits, mut limits) = (0, 0, 0, 0, 0);
    while programs < 120 {
        let p = random_flat_program(&mut rng);
        programs += 1;
        let reached = reached_redexes(&p, 6);

        // verification targets: one call shape per function
        let enc = encode_program_overapprox(&p, &EncodeOptions::default()).map_err(|e| e.to_string())?;
        for (f, k) in p.functions() {
            let pool = [Var::e("z0"), Var::e("z1")];
            let pats: Vec<Term> = (0..k).map(|_| random_passive(&mut rng, &['a', 'b'], &pool, 3)).collect();
            let target = Target::Reaches { function: f.clone(), patterns: pats.clone() };
            let th = encode_exit_goal(&p, &enc, &[target]).unwrap();
            let opts = FinderOptions { max_size: 5, deadline: Duration::from_millis(500), ..Default::default() };
            if let Ok(m) = find_model(&th, &opts) {
                safe += 1;
                check_model(&m, &th)?;
                let shape = Term::call(f.clone(), pats.clone());
                if let Some(hit) = reached.iter().find(|c| instance_of(c, &shape).is_some()) {
                    return Err(format!("SAFE verdict for {} but BFS reaches {}", print_term(&shape), print_term(hit)));
                }
            }
        }

        let opts = ScpOptions {
            fcm: FinderOptions { max_size: 6, deadline: Duration::from_millis(500), ..Default::default() },
            deadline: Duration::from_secs(5),
            ..Default::default()
        };
        let r = match supercompile(&p, &opts) {
            Ok(r) => r,
            Err(_) => {
                limits += 1;
                continue;
            }
        };
        for pr in &r.report.pruned_rules {
            pruned_rules += 1;
            let rule = p.rules.iter().find(|x| x.index == pr.rule).unwrap();
            for c in &reached {
                if instance_of(c, &pr.redex).is_none() {
                    continue;
                }
                let Term::Call(_, args) = c else { continue };
                ensure(all_substitutions(args, rule.patterns()).is_empty(), || {
                    format!("rule {} pruned at {} but fires on {}", pr.rule, print_term(&pr.redex), print_term(c))
                })?;
            }
        }
        for pe in &r.report.pruned_exits {
            pruned_exits += 1;
            let shape = t(&pe.target);
            if let Some(hit) = reached.iter().find(|c| instance_of(c, &shape).is_some()) {
                return Err(format!("exit through {} pruned but BFS reaches {}", pe.target, print_term(hit)));
            }
        }
    }
    Ok(format!(
        "{programs} programs: {safe} SAFE verdicts, {pruned_rules} pruned rules, {pruned_exits} pruned exits, \
         all confirmed; {limits} hit scp limits"
    ))
}

/// Keeps the encoded argument positions and erases characters outside the
/// model's signature, the image under which the encoding covers every run.
fn project(kept: &std::collections::BTreeMap<String, Vec<usize>>, f: &str, args: &[Term], chars: &[char]) -> Vec<Term> {
    kept[f].iter().map(|&i| erase(&args[i], chars)).collect()
}

fn erase(t: &Term, chars: &[char]) -> Term {
    match t {
        Term::Char(c) if !chars.contains(c) => Term::Empty,
        Term::Paren(inner) => Term::paren(erase(inner, chars)),
        Term::Concat(items) => Term::seq(items.iter().map(|x| erase(x, chars))),
        other => other.clone(),
    }
}

fn c8_models(shared: &mut Shared) -> Check {
    ensure(!shared.models.is_empty(), || "criteria 3 and 4 produced no models".into())?;
    let mut rng = StdRng::seed_from_u64(8);
    let mut notes = Vec::new();
    for prod in &shared.models {
        let m = &prod.model;
        check_model(m, &prod.theory).map_err(|e| format!("{}: {e}", prod.label))?;
        let chars: Vec<char> = m.constants.keys().filter_map(|c| superfcm::fol::const_char(c)).collect();
        let mut agreements = 0;
        for (pred, rel) in &m.relations {
            let a = model_to_automaton(m, pred, true).map_err(|e| format!("{}: {e}", prod.label))?;
            let neg = model_to_automaton(m, pred, false).unwrap();
            for _ in 0..1000 / m.relations.len() + 1 {
                let args: Vec<Term> = (0..rel.arity).map(|_| random_data(&mut rng, &chars, 5)).collect();
                let vals: Vec<usize> =
                    args.iter().map(|x| m.eval(&encode_term(x), &[]).unwrap()).collect();
                let table = m.holds(pred, &vals).unwrap();
                ensure(a.accepts(&args) == table && neg.accepts(&args) == !table, || {
                    format!("{}: automaton for {pred} disagrees on {:?}", prod.label, args.iter().map(print_term).collect::<Vec<_>>())
                })?;
                agreements += 1;
            }
        }
        let (mut contained, mut excluded) = (0, 0);
        if let (Some(p), Some(kept)) = (&prod.program, &prod.kept) {
            let mut automata = std::collections::BTreeMap::new();
            let mut automaton = |pred: &str| {
                automata.entry(pred.to_string()).or_insert_with(|| model_to_automaton(m, pred, true).unwrap()).clone()
            };
            for call in reached_redexes(p, 4) {
                let Term::Call(f, args) = &call else { continue };
                let pred = reach_pred(f);
                if !m.relations.contains_key(&pred) || !call.is_passive_call() {
                    continue;
                }
                let a = automaton(&pred);
                ensure(a.accepts(&project(kept, f, args, &chars)), || format!("{}: reachable {} rejected", prod.label, print_term(&call)))?;
                contained += 1;
            }
            for (pred, args) in &prod.targets {
                let f = pred.trim_start_matches("Reach_");
                let a = automaton(pred);
                ensure(!a.accepts(&project(kept, f, args, &chars)), || {
                    format!("{}: target instance {:?} accepted", prod.label, args.iter().map(print_term).collect::<Vec<_>>())
                })?;
                excluded += 1;
            }
        }
        notes.push(format!("{} (size {}): {agreements} agree, {contained} reachable in, {excluded} targets out", prod.label, m.size));
    }
    Ok(notes.join("; "))
}

trait PassiveCall {
    fn is_passive_call(&self) -> bool;
}

impl PassiveCall for Term {
    fn is_passive_call(&self) -> bool {
        matches!(self, Term::Call(_, args) if args.iter().all(Term::is_passive))
    }
}

fn c9_equivalence(_: &mut Shared) -> Check {
    let mut rng = StdRng::seed_from_u64(9);
    let mut notes = Vec::new();
    for name in corpus_names() {
        let p = corpus(name);
        let r = supercompile(&p, &ScpOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let (mut agree, mut values, mut tries) = (0, 0, 0);
        while agree < 200 && tries < 5000 {
            tries += 1;
            let th = random_inputs(&p, &mut rng);
            let a = eval(&p, &th, 100_000);
            if matches!(a.result, EvalResult::FuelExhausted { .. }) {
                continue;
            }
            let b = eval(&r.residual, &th, 1_000_000);
            let same = match (&a.result, &b.result) {
                (EvalResult::Value { value: x }, EvalResult::Value { value: y }) => x == y,
                (EvalResult::Stuck { .. }, EvalResult::Stuck { .. }) => true,
                _ => false,
            };
            ensure(same, || format!("{name}: differs on {:?}: {:?} vs {:?}", th, a.result, b.result))?;
            agree += 1;
            values += usize::from(a.value().is_some());
        }
        ensure(agree >= 200, || format!("{name}: only {agree} terminating inputs"))?;
        notes.push(format!("{name} {agree} ({values} values)"));
    }
    Ok(notes.join(", "))
}

fn main() {
    type Criterion = (&'static str, fn(&mut Shared) -> Check);
    let criteria: [Criterion; 9] = [
        ("interpreter fidelity", c1_interpreter),
        ("Markov matching", c2_matching),
        ("one-step unreachability", c3_one_step),
        ("Fibonacci-word safety", c4_fibonacci),
        ("output formats", c5_formats),
        ("non-regular example", c6_nonregular),
        ("random-program soundness", c7_random),
        ("model/automaton coherence", c8_models),
        ("semantics preservation", c9_equivalence),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut shared)))
            .unwrap_or_else(|e| Err(format!("panic: {:?}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())))));
        let took = started.elapsed();
        match result {
            Ok(detail) => println!("criterion {} ({name}): PASS [{took:.1?}] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{took:.1?}] {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
