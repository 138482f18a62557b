use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    let corpus = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let args: Vec<String> =
        args.iter().map(|a| if a.ends_with(".l") { corpus.join(a).display().to_string() } else { a.to_string() }).collect();
    Command::new(env!("CARGO_BIN_EXE_superfcm")).args(&args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_the_value() {
    let o = run(&["run", "fib.l", "--bind", "e.n='III'"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("('aba'):('baaba')"), "{}", stdout(&o));
}

#[test]
fn stuck_and_usage_exit_codes() {
    assert_eq!(run(&["run", "g.l", "--bind", "e.ps="]).status.code(), Some(2));
    assert_eq!(run(&["verify", "fib.l", "--max-size", "1"]).status.code(), Some(64));
    assert_eq!(run(&["verify", "fib.l", "--deadline", "0"]).status.code(), Some(64));
}

#[test]
fn one_step_verdict() {
    let o = run(&["verify", "ex5.l", "--one-step", "--rule", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("SAFE"), "{}", stdout(&o));
}

#[test]
fn scp_is_deterministic() {
    let a = run(&["scp", "fibB.l", "--seed", "3"]);
    let b = run(&["scp", "fibB.l", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("format: 'T'"), "{}", stdout(&a));
}
