//! Command-line front end and reporting.
//!
//! Five subcommands cover the pipeline: `lts` explores a model (or its
//! atomic-block specification) into Aldebaran format, `minimize` quotients
//! an `.aut` file by a chosen equivalence, `check-lin` and
//! `check-lockfree` run the two verdict pipelines, and `bench` runs the
//! registered benchmarks against their expected verdicts.
//!
//! Exit codes are a stable contract: 0 the checked property holds, 1 it is
//! violated (or a benchmark expectation mismatched), 2 the input was
//! unusable (parse, validation, or usage error), 3 a resource ceiling was
//! hit. All commands are deterministic; reports carry a wall-time field
//! that golden comparisons are expected to exclude.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchError, BenchReport};
use crate::bisim::{partition, quotient, EquivalenceKind, Lasso};
use crate::explorer::{self, validate, ClientConfig, ExploreError};
use crate::lts::Lts;
use crate::modelir::{parse_model, ObjectModel};
use crate::progress::{check_lockfree, ProgressCheckRequest};
use crate::refine::{check_linearizability, Counterexample, RefineError, Verdict};

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CEILING: i32 = 3;

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "linchk",
    version,
    about = "Linearizability and lock-freedom checker for concurrent-object models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Explore a model's object system and write it in .aut format.
    Lts(LtsArgs),
    /// Quotient an .aut file by a process equivalence.
    Minimize(MinimizeArgs),
    /// Check linearizability against the model's sequential spec.
    CheckLin(CheckLinArgs),
    /// Check lock-freedom against an abstract model.
    CheckLockfree(CheckLockfreeArgs),
    /// Run registered benchmarks and compare verdicts to expectations.
    Bench(BenchArgs),
}

/// Client-configuration flags shared by the exploring subcommands.
#[derive(Args, Debug)]
pub struct RunArgs {
    /// Number of client threads.
    #[arg(short = 'k', long, default_value_t = 2)]
    pub threads: u32,
    /// Operation budget per thread.
    #[arg(long, default_value_t = 2)]
    pub ops: u32,
    /// Cap on the default argument pools.
    #[arg(long)]
    pub values: Option<usize>,
    /// State ceiling for exploration.
    #[arg(long)]
    pub max_states: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> ClientConfig {
        let mut config = ClientConfig::default();
        config.threads = self.threads;
        config.max_ops_per_thread = self.ops;
        config.value_limit = self.values;
        if let Some(m) = self.max_states {
            config.max_states = m;
        }
        config
    }
}

#[derive(Args, Debug)]
pub struct LtsArgs {
    /// Model source file.
    pub model: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    /// Explore the atomic-block specification instead of the model.
    #[arg(long)]
    pub spec: bool,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MinimizeArgs {
    /// LTS in .aut format.
    pub aut: PathBuf,
    /// Equivalence to quotient by.
    #[arg(long, value_enum, default_value_t = EqArg::Branching)]
    pub eq: EqArg,
    /// Output path for the quotient; omitted writes no file.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckLinArgs {
    /// Model source file (must contain a spec block).
    pub model: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = ReportArg::Text)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
pub struct CheckLockfreeArgs {
    /// Concrete model source file.
    pub concrete: PathBuf,
    /// Abstract model source file; omit only with --static-lp.
    pub abstract_model: Option<PathBuf>,
    /// Compare against the concrete model's own atomic-block
    /// specification, acknowledging that this is sound only for methods
    /// with static linearization points.
    #[arg(long)]
    pub static_lp: bool,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = ReportArg::Text)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Benchmark names to run.
    pub names: Vec<String>,
    /// Run every registered benchmark.
    #[arg(long)]
    pub all: bool,
    #[arg(long, value_enum, default_value_t = ReportArg::Text)]
    pub report: ReportArg,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
pub enum EqArg {
    Strong,
    Branching,
    BranchingDiv,
    Weak,
}

impl From<EqArg> for EquivalenceKind {
    fn from(e: EqArg) -> EquivalenceKind {
        match e {
            EqArg::Strong => EquivalenceKind::Strong,
            EqArg::Branching => EquivalenceKind::Branching,
            EqArg::BranchingDiv => EquivalenceKind::BranchingDiv,
            EqArg::Weak => EquivalenceKind::Weak,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReportArg {
    Text,
    Records,
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Run one parsed command line; the return value is the process exit code.
/// All output goes to stdout, diagnostics to stderr.
pub fn run(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Lts(a) => cmd_lts(a),
        Command::Minimize(a) => cmd_minimize(a),
        Command::CheckLin(a) => cmd_check_lin(a),
        Command::CheckLockfree(a) => cmd_check_lockfree(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn input_error(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_INPUT
}

fn exit_for_explore(e: &ExploreError) -> i32 {
    match e {
        ExploreError::StateCeiling { .. } | ExploreError::TransitionCeiling { .. } => {
            eprintln!("error: {e}");
            EXIT_CEILING
        }
        _ => input_error(e),
    }
}

fn exit_for_refine(e: &RefineError) -> i32 {
    match e {
        RefineError::OracleBound { .. }
        | RefineError::TooManyOperations { .. }
        | RefineError::DfaCeiling { .. }
        | RefineError::ProductCeiling { .. } => {
            eprintln!("error: {e}");
            EXIT_CEILING
        }
        RefineError::MalformedHistory(_) => input_error(e),
        RefineError::Explore(inner) => exit_for_explore(inner),
    }
}

fn load_model(path: &PathBuf) -> Result<ObjectModel, i32> {
    let src = fs::read_to_string(path)
        .map_err(|e| input_error(format_args!("{}: {e}", path.display())))?;
    parse_model(&src).map_err(|e| input_error(e))
}

fn write_out(path: &PathBuf, text: &str) -> Result<(), i32> {
    fs::write(path, text).map_err(|e| input_error(format_args!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_lts(a: &LtsArgs) -> i32 {
    let model = match load_model(&a.model) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let config = a.run.config();
    match validate(&model, &config) {
        Ok(diags) if diags.is_empty() => {}
        Ok(diags) => {
            for d in diags {
                eprintln!("error: {d}");
            }
            return EXIT_INPUT;
        }
        Err(e) => return exit_for_explore(&e),
    }
    let lts = if a.spec {
        explorer::explore_spec(&model, &config)
    } else {
        explorer::explore(&model, &config)
    };
    let lts = match lts {
        Ok(l) => l,
        Err(e) => return exit_for_explore(&e),
    };
    let text = lts.store_aut();
    match &a.out {
        Some(p) => match write_out(p, &text) {
            Ok(()) => EXIT_PASS,
            Err(code) => code,
        },
        None => {
            print!("{text}");
            EXIT_PASS
        }
    }
}

fn cmd_minimize(a: &MinimizeArgs) -> i32 {
    let text = match fs::read_to_string(&a.aut) {
        Ok(t) => t,
        Err(e) => return input_error(format_args!("{}: {e}", a.aut.display())),
    };
    let lts = match Lts::load_aut(&text) {
        Ok(l) => l,
        Err(e) => return input_error(e),
    };
    let p = partition(&lts, a.eq.into());
    let q = quotient(&lts, &p);
    println!(
        "states: {} -> {}, transitions: {} -> {}, factor: {:.2}",
        lts.state_count(),
        q.state_count(),
        lts.transition_count(),
        q.transition_count(),
        lts.state_count() as f64 / q.state_count() as f64
    );
    if let Some(p) = &a.out {
        if let Err(code) = write_out(p, &q.store_aut()) {
            return code;
        }
    }
    EXIT_PASS
}

fn cmd_check_lin(a: &CheckLinArgs) -> i32 {
    let model = match load_model(&a.model) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let verdict = match check_linearizability(&model, &a.run.config()) {
        Ok(v) => v,
        Err(e) => return exit_for_refine(&e),
    };
    match a.report {
        ReportArg::Text => {
            println!("LINEARIZABLE: {}", if verdict.pass { "yes" } else { "no" });
            if let Some(Counterexample::History(h)) = &verdict.counterexample {
                for line in h.render_lines() {
                    println!("{line}");
                }
            }
        }
        ReportArg::Records => {
            print!("{}", lin_record(&model.name, &verdict, None));
        }
    }
    verdict_exit(&verdict)
}

fn cmd_check_lockfree(a: &CheckLockfreeArgs) -> i32 {
    if a.abstract_model.is_none() && !a.static_lp {
        return input_error(
            "no abstract model given; pass one or acknowledge the \
             atomic-block default with --static-lp",
        );
    }
    let concrete = match load_model(&a.concrete) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let abstract_model = match &a.abstract_model {
        Some(p) => match load_model(p) {
            Ok(m) => Some(m),
            Err(code) => return code,
        },
        None => None,
    };
    let abs_name = match &abstract_model {
        Some(m) => m.name.to_string(),
        None => format!("{}_spec", concrete.name),
    };
    let req = ProgressCheckRequest {
        concrete,
        abstract_model,
        config: a.run.config(),
    };
    let verdict = match check_lockfree(&req) {
        Ok(v) => v,
        Err(e) => return exit_for_refine(&e),
    };
    match a.report {
        ReportArg::Text => {
            println!(
                "LOCK-FREE: {} (relative to abstract model {abs_name})",
                if verdict.pass { "yes" } else { "no" }
            );
            if let Some(Counterexample::Lasso(l)) = &verdict.counterexample {
                let (stem, cycle) = render_lasso(l);
                println!("{stem}");
                println!("{cycle}");
            }
        }
        ReportArg::Records => {
            print!(
                "{}",
                check_record("lockfree", &req.concrete.name, &verdict, &[(
                    "abstract",
                    abs_name.clone()
                )])
            );
        }
    }
    verdict_exit(&verdict)
}

fn cmd_bench(a: &BenchArgs) -> i32 {
    let names: Vec<&str> = if a.all {
        bench::list_benchmarks().iter().map(|b| b.name).collect()
    } else if a.names.is_empty() {
        return input_error("no benchmarks named; pass names or --all");
    } else {
        a.names.iter().map(String::as_str).collect()
    };
    let mut reports = Vec::new();
    for name in names {
        match bench::run_benchmark(name, None) {
            Ok(r) => reports.push(r),
            Err(BenchError::UnknownBenchmark(n)) => {
                return input_error(format_args!("unknown benchmark `{n}`"))
            }
            Err(BenchError::Check(e)) => return exit_for_refine(&e),
        }
    }
    match a.report {
        ReportArg::Text => print!("{}", bench_table(&reports)),
        ReportArg::Records => print!("{}", bench_records(&reports)),
    }
    if reports.iter().all(|r| r.as_expected) {
        EXIT_PASS
    } else {
        EXIT_VIOLATED
    }
}

fn verdict_exit(v: &Verdict) -> i32 {
    if v.pass {
        EXIT_PASS
    } else {
        EXIT_VIOLATED
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// `stem:` and `cycle:` lines of a divergence witness; every step of the
/// lasso is an internal step, annotated with its originating method.
pub fn render_lasso(l: &Lasso) -> (String, String) {
    let chain = |from: u32, steps: &[crate::bisim::LassoStep]| {
        let mut s = from.to_string();
        for st in steps {
            let tau = match &st.origin {
                Some(m) => format!("tau({m})"),
                None => "tau".to_string(),
            };
            let _ = write!(s, " -{tau}-> {}", st.dst);
        }
        s
    };
    let cycle_from = l.cycle.first().map_or(l.start, |s| s.src);
    (
        format!("stem: {}", chain(l.start, &l.stem)),
        format!("cycle: {}", chain(cycle_from, &l.cycle)),
    )
}

fn record_key(stage: &str) -> String {
    stage.replace('-', "_")
}

/// One key=value record for a verdict, ended by a blank line.
fn check_record(check: &str, model: &str, v: &Verdict, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "check={check}");
    let _ = writeln!(out, "model={model}");
    for (k, val) in extra {
        let _ = writeln!(out, "{k}={val}");
    }
    let _ = writeln!(out, "verdict={}", if v.pass { "pass" } else { "fail" });
    for s in &v.stats {
        let key = record_key(s.stage);
        let _ = writeln!(out, "{key}_states={}", s.states);
        let _ = writeln!(out, "{key}_transitions={}", s.transitions);
    }
    out.push('\n');
    out
}

fn lin_record(model: &str, v: &Verdict, expected: Option<bool>) -> String {
    let mut extra = Vec::new();
    if let Some(want) = expected {
        extra.push(("expected", if want { "pass" } else { "fail" }.to_string()));
    }
    check_record("lin", model, v, &extra)
}

/// Line-oriented benchmark table.
fn bench_table(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<19} {:<4} {:<9} {:>8} {:>9} {:>8} {:>8}  {}",
        "benchmark", "lin", "lock-free", "states", "quotient", "factor", "wall_ms", "expected"
    );
    for r in reports {
        let lf = match &r.lockfree {
            Some(v) if v.pass => "yes",
            Some(_) => "no",
            None => "-",
        };
        let _ = writeln!(
            out,
            "{:<19} {:<4} {:<9} {:>8} {:>9} {:>8.2} {:>8}  {}",
            r.name,
            if r.lin.pass { "yes" } else { "no" },
            lf,
            r.states_before,
            r.states_after,
            r.reduction_factor,
            r.wall_ms,
            if r.as_expected { "ok" } else { "MISMATCH" },
        );
    }
    out
}

/// One record per check run, in registry order.
fn bench_records(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let bench = bench::find_benchmark(&r.name).expect("report names a registry entry");
        let mut extra = vec![
            (
                "expected",
                if bench.expected_linearizable { "pass" } else { "fail" }.to_string(),
            ),
            ("factor", format!("{:.2}", r.reduction_factor)),
            ("wall_ms", r.wall_ms.to_string()),
        ];
        out.push_str(&check_record("lin", &r.name, &r.lin, &extra));
        if let (Some(v), Some(want)) = (&r.lockfree, bench.expected_lockfree) {
            extra = vec![
                ("expected", if want { "pass" } else { "fail" }.to_string()),
                ("wall_ms", r.wall_ms.to_string()),
            ];
            out.push_str(&check_record("lockfree", &r.name, v, &extra));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
