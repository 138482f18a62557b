use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::json;

use superfcm::finder::{find_model, model_to_automaton, FinderError, FinderOptions};
use superfcm::fol::{
    encode_exit_goal, encode_program_overapprox, export_mace4, one_step_theory, program_theory, render_theory, EncodeOptions, FoTheory,
    Target,
};
use superfcm::interp::{eval, EvalResult};
use superfcm::program::Program;
use superfcm::scp::{supercompile, ScpError, ScpOptions};
use superfcm::syntax::{parse_program, parse_term, print_program, print_term};
use superfcm::term::{vars, Substitution, Term, Var, VarKind};

const EXIT_UNKNOWN: u8 = 1;
const EXIT_STUCK: u8 = 2;
const EXIT_FUEL: u8 = 3;
const EXIT_LIMIT: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "superfcm", version, about = "Run, supercompile and verify sequence-rewriting programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the start term under the given bindings.
    Run {
        program: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Try to prove a target unreachable with a finite countermodel.
    Verify {
        program: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Supercompile the start term into a residual program.
    Scp {
        program: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the first-order encoding, Mace4 input or the unfold graph.
    Emit {
        program: PathBuf,
        #[arg(long, value_enum)]
        what: What,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum What {
    Fol,
    Mace4,
    Dot,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Default)]
enum Format {
    #[default]
    Text,
    Json,
    Dot,
    Mace4,
}

#[derive(Args, Clone)]
struct Common {
    /// `VAR=TERM`, e.g. e.n="'III'"; repeatable.
    #[arg(long = "bind", value_name = "VAR=TERM")]
    bind: Vec<String>,
    #[arg(long, default_value_t = superfcm::interp::DEFAULT_FUEL)]
    fuel: u64,
    #[arg(long, default_value_t = 2)]
    min_size: usize,
    #[arg(long, default_value_t = 16)]
    max_size: usize,
    /// Whole-command budget in seconds.
    #[arg(long, default_value_t = 120.0)]
    deadline: f64,
    /// Budget of each model search inside `scp`, in seconds.
    #[arg(long, default_value_t = 10.0)]
    fcm_deadline: f64,
    /// Restrict to one step from the start term; optionally names the rule.
    #[arg(long, num_args = 0..=1, default_missing_value = "0", value_name = "RULE")]
    one_step: Option<usize>,
    #[arg(long)]
    rule: Option<usize>,
    /// `f = pattern` (some call of f returns it) or `f(patterns)`.
    #[arg(long)]
    target: Option<String>,
    /// Drop counter-like argument positions from the encoding.
    #[arg(long)]
    project_counters: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed of the residual self-check in `scp`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Validated settings shared by the commands.
struct RunConfig {
    bindings: Substitution,
    fuel: u64,
    min_size: usize,
    max_size: usize,
    deadline: Duration,
    fcm_deadline: Duration,
    format: Format,
    seed: u64,
}

impl RunConfig {
    fn new(c: &Common) -> Result<Self, String> {
        let mut deadline = c.deadline;
        if let Ok(v) = std::env::var("SUPERFCM_DEADLINE") {
            deadline = v.parse().map_err(|_| format!("SUPERFCM_DEADLINE: not a number: {v}"))?;
        }
        if !(deadline > 0.0 && c.fcm_deadline > 0.0) {
            return Err("deadlines must be positive".into());
        }
        if c.min_size < 2 || c.max_size < c.min_size {
            return Err("sizes must satisfy max-size ≥ min-size ≥ 2".into());
        }
        let mut bindings = Substitution::new();
        for b in &c.bind {
            let (v, t) = parse_binding(b)?;
            bindings.bind(v, t).map_err(|e| e.to_string())?;
        }
        Ok(RunConfig {
            bindings,
            fuel: c.fuel,
            min_size: c.min_size,
            max_size: c.max_size,
            deadline: Duration::from_secs_f64(deadline),
            fcm_deadline: Duration::from_secs_f64(c.fcm_deadline),
            format: c.format,
            seed: c.seed,
        })
    }

    fn finder(&self) -> FinderOptions {
        FinderOptions { min_size: self.min_size, max_size: self.max_size, deadline: self.deadline, ..Default::default() }
    }
}

fn parse_binding(text: &str) -> Result<(Var, Term), String> {
    let (lhs, rhs) = text.split_once('=').ok_or_else(|| format!("binding {text}: expected VAR=TERM"))?;
    let (kind, name) = lhs.trim().split_once('.').ok_or_else(|| format!("binding {text}: bad variable"))?;
    let kind = match kind {
        "e" => VarKind::E,
        "s" => VarKind::S,
        "t" => VarKind::T,
        _ => return Err(format!("binding {text}: bad variable kind")),
    };
    let rhs = rhs.trim();
    let term = if rhs.is_empty() { Term::Empty } else { parse_term(rhs).map_err(|e| e.to_string())? };
    if !term.is_ground() || !term.is_passive() {
        return Err(format!("binding {text}: value must be an object term"));
    }
    Ok((Var::new(kind, name), term))
}

fn load(path: &Path) -> Result<Program, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_program(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit_output(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, String> {
    match cmd {
        Command::Run { program, common } => cmd_run(&load(&program)?, &common),
        Command::Verify { program, common } => cmd_verify(&load(&program)?, &common),
        Command::Scp { program, common } => cmd_scp(&load(&program)?, &common),
        Command::Emit { program, what, common } => cmd_emit(&load(&program)?, what, &common),
    }
}

fn cmd_run(p: &Program, c: &Common) -> Result<u8, String> {
    let cfg = RunConfig::new(c)?;
    if let Some(v) = vars(&p.initial).order.into_iter().find(|v| cfg.bindings.get(v).is_none()) {
        return Err(format!("no binding for {v}"));
    }
    let ev = eval(p, &cfg.bindings, cfg.fuel);
    let code = match &ev.result {
        EvalResult::Value { .. } => 0,
        EvalResult::Stuck { .. } => EXIT_STUCK,
        EvalResult::FuelExhausted { .. } => EXIT_FUEL,
    };
    let text = match cfg.format {
        Format::Json => {
            let body = match &ev.result {
                EvalResult::Value { value } => json!({"outcome": "value", "value": print_term(value)}),
                EvalResult::Stuck { state, call } => {
                    json!({"outcome": "stuck", "state": print_term(state), "call": print_term(call)})
                }
                EvalResult::FuelExhausted { state, .. } => json!({"outcome": "fuel_exhausted", "state": print_term(state)}),
            };
            format!("{}\n", json!({"result": body, "steps": ev.steps, "work": ev.work}))
        }
        _ => match &ev.result {
            EvalResult::Value { value } => format!("{}\nsteps: {}\n", print_term(value), ev.steps),
            EvalResult::Stuck { call, .. } => format!("stuck at {}\nsteps: {}\n", print_term(call), ev.steps),
            EvalResult::FuelExhausted { .. } => format!("fuel exhausted\nsteps: {}\n", ev.steps),
        },
    };
    emit_output(&c.out, &text)?;
    Ok(code)
}

/// The theory a `verify` or `emit` invocation talks about.
fn theory_for(p: &Program, c: &Common) -> Result<(FoTheory, Option<String>), String> {
    if let Some(given) = c.one_step {
        let index = c.rule.or(if given > 0 { Some(given) } else { None }).ok_or("--one-step needs a rule")?;
        let rule = p.rules.iter().find(|r| r.index == index).ok_or_else(|| format!("no rule {index}"))?;
        let th = one_step_theory(&p.initial, rule, &p.alphabet).map_err(|e| e.to_string())?;
        return Ok((th, None));
    }
    let enc = encode_program_overapprox(p, &EncodeOptions { project_counters: c.project_counters })
        .map_err(|e| e.to_string())?;
    match &c.target {
        Some(text) => {
            let target = Target::parse(text).map_err(|e| e.to_string())?;
            let pred = match &target {
                Target::Reaches { function, .. } | Target::Returns { function, .. } => {
                    superfcm::fol::reach_pred(function)
                }
            };
            let th = encode_exit_goal(p, &enc, &[target]).map_err(|e| e.to_string())?;
            Ok((th, Some(pred)))
        }
        None => Ok((program_theory(&enc.theory), None)),
    }
}

fn cmd_verify(p: &Program, c: &Common) -> Result<u8, String> {
    let cfg = RunConfig::new(c)?;
    if c.target.is_none() && c.one_step.is_none() {
        return Err("verify needs --target or --one-step".into());
    }
    let (th, pred) = match theory_for(p, c) {
        Ok(x) => x,
        Err(reason) => return report_unknown(&cfg, c, &format!("unsupported shape: {reason}")),
    };
    match find_model(&th, &cfg.finder()) {
        Ok(m) => {
            let text = match cfg.format {
                Format::Json => format!("{}\n", json!({"verdict": "SAFE", "size": m.size, "model": m})),
                Format::Mace4 => m.render(),
                Format::Dot => match pred.as_deref().map(|q| model_to_automaton(&m, q, true)) {
                    Some(Ok(a)) => a.to_dot(),
                    _ => return Err("no automaton for this target".into()),
                },
                Format::Text => format!("SAFE: countermodel of size {}\n{}", m.size, m.render()),
            };
            emit_output(&c.out, &text)?;
            Ok(0)
        }
        Err(e) => {
            let reason = match e {
                FinderError::DeadlineExceeded { .. } => format!("deadline: {e}"),
                FinderError::ExhaustedSizes { .. } => format!("sizes exhausted: {e}"),
                _ => e.to_string(),
            };
            report_unknown(&cfg, c, &reason)
        }
    }
}

fn report_unknown(cfg: &RunConfig, c: &Common, reason: &str) -> Result<u8, String> {
    let text = match cfg.format {
        Format::Json => format!("{}\n", json!({"verdict": "UNKNOWN", "reason": reason})),
        _ => format!("UNKNOWN: {reason}\n"),
    };
    emit_output(&c.out, &text)?;
    Ok(EXIT_UNKNOWN)
}

fn scp_options(cfg: &RunConfig) -> ScpOptions {
    ScpOptions {
        fcm: FinderOptions { deadline: cfg.fcm_deadline, ..cfg.finder() },
        deadline: cfg.deadline,
        ..Default::default()
    }
}

fn cmd_scp(p: &Program, c: &Common) -> Result<u8, String> {
    let cfg = RunConfig::new(c)?;
    let result = match supercompile(p, &scp_options(&cfg)) {
        Ok(r) => r,
        Err(e @ ScpError::LimitExceeded(_)) => {
            eprintln!("{e}");
            return Ok(EXIT_LIMIT);
        }
        Err(e) => return Err(e.to_string()),
    };
    let check = self_check(p, &result.residual, cfg.seed);
    let residual = print_program(&result.residual);
    let report = match cfg.format {
        Format::Json => format!(
            "{}\n",
            json!({"report": result.report, "self_check": check, "residual": residual})
        ),
        Format::Dot => result.graph.to_dot(),
        _ => format!("{}self-check: {check}\n", result.report.render()),
    };
    match &c.out {
        Some(path) => {
            std::fs::write(path, &residual).map_err(|e| format!("{}: {e}", path.display()))?;
            let ext = match cfg.format {
                Format::Json => "report.json",
                Format::Dot => "dot",
                _ => "report.txt",
            };
            let side = path.with_extension(ext);
            std::fs::write(&side, &report).map_err(|e| format!("{}: {e}", side.display()))?;
        }
        None => print!("{residual}\n{report}"),
    }
    Ok(0)
}

/// Compares residual and source on random inputs; a sanity line for the report.
fn self_check(p: &Program, r: &Program, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let alphabet: Vec<char> = p.alphabet.iter().copied().collect();
    if alphabet.is_empty() {
        return "skipped (empty alphabet)".into();
    }
    let vs = vars(&p.initial).order;
    let (mut agree, mut total) = (0, 0);
    for _ in 0..50 {
        let mut th = Substitution::new();
        for v in &vs {
            let value = match v.kind {
                VarKind::E => superfcm::oracle::random_data(&mut rng, &alphabet, 6),
                _ => Term::Char(alphabet[rand::Rng::gen_range(&mut rng, 0..alphabet.len())]),
            };
            th.bind(v.clone(), value).expect("sorted value");
        }
        let a = eval(p, &th, 100_000);
        if a.value().is_none() {
            continue;
        }
        total += 1;
        if a.value() == eval(r, &th, 100_000).value() {
            agree += 1;
        }
    }
    format!("{agree}/{total} terminating random inputs agree")
}

fn cmd_emit(p: &Program, what: What, c: &Common) -> Result<u8, String> {
    let cfg = RunConfig::new(c)?;
    let text = match what {
        What::Dot => match supercompile(p, &scp_options(&cfg)) {
            Ok(r) => r.graph.to_dot(),
            Err(e @ ScpError::LimitExceeded(_)) => {
                eprintln!("{e}");
                return Ok(EXIT_LIMIT);
            }
            Err(e) => return Err(e.to_string()),
        },
        What::Fol => {
            let (th, _) = theory_for(p, c)?;
            format!("% {} axioms\n{}", th.axioms.len(), render_theory(&th))
        }
        What::Mace4 => {
            let (th, _) = theory_for(p, c)?;
            format!("% {} axioms\n{}", th.axioms.len(), export_mace4(&th))
        }
    };
    emit_output(&c.out, &text)?;
    Ok(0)
}
