use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use keyrate::io::{self, ConstraintChoice, PinchingMode, RunConfig, Scenario};
use keyrate::kfactory::Pinching;
use keyrate::oracle::{entropy_production, inequality_suite, purification_crosscheck, random_realization};
use keyrate::pipeline::{cond_shannon, devetak_winter, level_label, sweep, BoundResult, PointSetup};
use keyrate::scenarios::Behavior;
use keyrate::Error;
use serde::Serialize;

const EXIT_VERIFY: u8 = 1;
const EXIT_ROWS: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser)]
#[command(name = "keyrate", version, about = "Certified entropy bounds and device-independent key rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a scenario over a parameter grid and write a CSV of bounds and rates.
    Rate(RateArgs),
    /// Certified bound for a behavior read from a JSON file.
    Bound(BoundArgs),
    /// Run the randomized oracle suites.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// full | chsh | tilted:α
    #[arg(long, default_value = "full")]
    constraints: String,
    /// one (H(A0|E)) | two (H(A0B0|E))
    #[arg(long, default_value = "one")]
    pinching: String,
    /// Per-party basis depths "a,b"; defaults to the smallest level admitting K.
    #[arg(long)]
    level: Option<String>,
    #[arg(long = "lambda-budget", default_value_t = 200)]
    lambda_budget: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat Alice as a characterized qubit (six-state scenario only).
    #[arg(long)]
    onesided: bool,
}

#[derive(Args)]
struct RateArgs {
    /// JSON run configuration; replaces the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// werner | efficiency | six-state
    #[arg(long, default_value = "werner")]
    scenario: String,
    /// "a,b,c" or "start:step:stop"
    #[arg(long, default_value = "")]
    grid: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BoundArgs {
    /// Behavior JSON file.
    #[arg(long)]
    behavior: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    cases: usize,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn usage(e: Error) -> Failure {
    Failure::new(EXIT_USAGE, e.to_string())
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::Infeasible { certified: true } => Failure::new(EXIT_INFEASIBLE, "constraints are infeasible (certified)"),
        Error::Infeasible { certified: false } => Failure::new(EXIT_INFEASIBLE, "constraints appear infeasible (not certified)"),
        e => Failure::new(EXIT_ROWS, e.to_string()),
    }
}

fn config_from(scenario: Scenario, grid: Vec<f64>, c: &Common) -> Result<RunConfig, Failure> {
    let level = c.level.as_deref().map(io::parse_level).transpose().map_err(usage)?;
    Ok(RunConfig {
        scenario,
        grid,
        constraints: c.constraints.parse::<ConstraintChoice>().map_err(usage)?,
        pinching: c.pinching.parse::<PinchingMode>().map_err(usage)?,
        level,
        lambda_budget: c.lambda_budget,
        tol: c.tol,
        seed: c.seed,
        out: c.out.clone(),
        onesided: c.onesided,
    })
}

fn write_output(path: Option<&Path>, text: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::new(EXIT_ROWS, format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text).map_err(|e| Failure::new(EXIT_ROWS, e.to_string())),
    }
}

fn warn_level(cfg: &RunConfig, level: &str) {
    if let Some((a, b)) = cfg.level {
        if level != format!("{a},{b}") && !level.is_empty() {
            eprintln!("warning: level {a},{b} does not admit K; raised to {level}");
        }
    }
}

fn cmd_rate(args: RateArgs) -> Result<(), Failure> {
    let cfg = match &args.config {
        Some(path) => io::read_json::<RunConfig>(path).map_err(usage)?,
        None => {
            let scenario = args.scenario.parse::<Scenario>().map_err(usage)?;
            let grid = io::parse_grid(&args.grid).map_err(usage)?;
            config_from(scenario, grid, &args.common)?
        }
    };
    cfg.validate().map_err(usage)?;
    let rows = sweep(&cfg).map_err(usage)?;
    if let Some(r) = rows.first() {
        warn_level(&cfg, &r.level);
    }
    let mut buf = Vec::new();
    io::write_rows(&mut buf, &rows).map_err(runtime)?;
    write_output(cfg.out.as_deref(), &buf)?;
    let failed: Vec<_> = rows.iter().filter(|r| r.status != "ok").collect();
    for r in &failed {
        eprintln!("row {}: {}", r.parameter, r.status);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_ROWS, format!("{} of {} rows failed", failed.len(), rows.len())))
    }
}

#[derive(Serialize)]
struct BoundReport {
    bound: BoundResult,
    h_ab_bits: f64,
    dw_rate: f64,
    constraints: Vec<String>,
}

fn cmd_bound(args: BoundArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.behavior)
        .map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", args.behavior.display())))?;
    let b: Behavior = io::from_json(&text).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    b.validate().map_err(|e| Failure::new(EXIT_DATA, format!("invalid behavior: {e}")))?;
    let scenario = if args.common.onesided { Scenario::SixState } else { Scenario::Werner };
    let cfg = config_from(scenario, vec![0.0], &args.common)?;
    cfg.validate().map_err(usage)?;
    let setup = PointSetup::new(&cfg, b).map_err(runtime)?;
    let engine = setup.engine().map_err(runtime)?;
    let level = level_label(engine.level());
    warn_level(&cfg, &level);
    let best = engine.optimize(cfg.lambda_budget, None).map_err(runtime)?;
    let h_ab = cond_shannon(&setup.behavior, setup.behavior.key).map_err(runtime)?;
    let report = BoundReport {
        dw_rate: devetak_winter(best.bits, h_ab),
        h_ab_bits: h_ab,
        constraints: setup.constraints.labels.clone(),
        bound: best,
    };
    let json = io::to_json(&report).map_err(runtime)? + "\n";
    write_output(cfg.out.as_deref(), json.as_bytes())
}

#[derive(Serialize)]
struct VerifyReport {
    seed: u64,
    cases: usize,
    inequality_violations: usize,
    worst_gap: f64,
    max_k_mismatch: f64,
    max_purification_mismatch: f64,
    failed_cases: Vec<u64>,
}

/// Quadrature versus symbolic `⟨K⟩`, relative.
const K_AGREEMENT: f64 = 1e-8;
/// Entropy production versus purification, nats.
const PURIFICATION_AGREEMENT: f64 = 1e-9;

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    if args.cases == 0 {
        return Err(Failure::new(EXIT_USAGE, "cases must be at least 1"));
    }
    let suite = inequality_suite(args.cases, args.seed, 1).map_err(|e| Failure::new(EXIT_VERIFY, e.to_string()))?;
    let mut max_pur = 0.0f64;
    let mut failed = Vec::new();
    for i in 0..args.cases as u64 {
        let seed = args.seed.wrapping_add(i);
        let r = random_realization(seed, 1 + (i % 4) as usize);
        for pin in [Pinching::OneParty { alice_key: 0 }, Pinching::TwoParty { alice_key: 1, bob_key: 0 }] {
            let d = entropy_production(&r, pin).and_then(|a| purification_crosscheck(&r, pin).map(|b| (a - b).abs()));
            match d {
                Ok(d) => {
                    max_pur = max_pur.max(d);
                    if d > PURIFICATION_AGREEMENT {
                        failed.push(seed);
                    }
                }
                Err(_) => failed.push(seed),
            }
        }
    }
    failed.dedup();
    let report = VerifyReport {
        seed: args.seed,
        cases: args.cases,
        inequality_violations: suite.violations,
        worst_gap: suite.worst_gap,
        max_k_mismatch: suite.max_k_mismatch,
        max_purification_mismatch: max_pur,
        failed_cases: failed,
    };
    println!("{}", io::to_json(&report).map_err(runtime)?);
    if report.inequality_violations == 0 && report.max_k_mismatch <= K_AGREEMENT && report.failed_cases.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VERIFY, "verification failed"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Rate(a) => cmd_rate(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
