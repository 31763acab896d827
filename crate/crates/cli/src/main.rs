use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use heatctl_core::check::check_suite;
use heatctl_core::config::{ConfigError, ExperimentConfig, KEYS};
use heatctl_core::driver::{convergence_order, RunOutcome, RunStatus, Solver, Variant};
use heatctl_core::report::{emit_records, emit_table, parse_records};

const EXIT_DIVERGED: u8 = 2;
const EXIT_MAXITER: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_INTERNAL: u8 = 5;
const EXIT_CHECK_FAILED: u8 = 1;

/// Null controls for the semilinear heat equation.
#[derive(Parser, Debug)]
#[command(name = "heatctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory (overrides HEATCTL_OUT and output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Iterate with the variant chosen by run.variant (default: least squares).
    Run,
    /// Full Newton steps (lambda = 1).
    Newton,
    /// Fixed-point baseline.
    Picard,
    /// Run the self-check suite.
    Check,
    /// Re-emit table.csv from records.jsonl in the output directory.
    Table,
}

enum Failure {
    Config(String),
    Internal(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn core_error(e: heatctl_core::Error) -> Failure {
    match e {
        heatctl_core::Error::Param(_) | heatctl_core::Error::Domain { .. } => Failure::Config(e.to_string()),
        other => Failure::Internal(other.to_string()),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Internal(format!("{}: {e}", path.display()))
}

fn keys_help() -> String {
    let mut s = String::from("Configuration keys (default in brackets):\n");
    for (k, d, h) in KEYS {
        let _ = writeln!(s, "  {k:<20} {h} [{d}]");
    }
    s.push_str(
        "\nEnvironment: HEATCTL_OUT overrides output.dir.\n\
         Exit codes: 0 converged or checks passed, 1 a check failed, 2 diverged,\n\
         3 iteration cap reached, 4 configuration error, 5 internal error.",
    );
    s
}

fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &cli.out {
        return dir.clone();
    }
    match std::env::var_os("HEATCTL_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_dir.clone(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| io_error(&path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "n/a".into())
}

fn summary(cfg: &ExperimentConfig, variant: Variant, out: &RunOutcome, oracle: Option<f64>, secs: f64) -> String {
    let mut s = String::new();
    let last = out.records.last().expect("a run has at least one record");
    let _ = writeln!(s, "variant: {}", variant.name());
    let _ = writeln!(s, "status: {}", out.status.name());
    let _ = writeln!(s, "iterations: {}", last.k);
    let _ = writeln!(s, "sqrt2E initial: {:.6e}", out.records[0].sqrt2e);
    let _ = writeln!(s, "sqrt2E final: {:.6e}", last.sqrt2e);
    let _ = writeln!(s, "norm_y final: {:.6e}", last.norm_y);
    let _ = writeln!(s, "norm_f final: {:.6e}", last.norm_f);
    let lambdas: Vec<f64> = out.records.iter().filter_map(|r| r.lambda).collect();
    let min_lambda = lambdas.iter().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    let _ = writeln!(s, "lambda min: {}", fmt_opt(min_lambda));
    let order = convergence_order(&out.records).ok();
    let _ = writeln!(s, "convergence order: {}", fmt_opt(order));
    let _ = writeln!(s, "terminal ratio |y(T)|/|u0|: {}", fmt_opt(oracle));
    if variant == Variant::Picard {
        let rel: Vec<f64> = out.records.iter().filter_map(|r| r.rel_dy).collect();
        let ny0 = out.records[0].norm_y;
        let max_ny = out.records.iter().map(|r| r.norm_y).fold(0.0, f64::max);
        let _ = writeln!(s, "picard norm_y max / first: {:.6e}", max_ny / ny0.max(f64::MIN_POSITIVE));
        let _ = writeln!(s, "picard rel_dy min: {}", fmt_opt(rel.iter().copied().reduce(f64::min)));
        if out.status == RunStatus::Converged {
            let _ = writeln!(
                s,
                "note: the discrete Picard map converged; a bounded but non-convergent sequence was expected"
            );
        }
    }
    let _ = writeln!(s, "wall time: {secs:.2} s");
    s.push_str("\n# configuration\n");
    s.push_str(&cfg.dump());
    s
}

fn run(cli: &Cli, cfg: &ExperimentConfig, variant: Variant) -> Result<u8, Failure> {
    let beta = cfg.beta()?;
    let g = cfg.nonlinearity()?;
    let dir = output_dir(cli, cfg);
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let start = Instant::now();
    let disc = cfg.discretization().map_err(core_error)?;
    let solver = Solver::new(&disc, &g);
    let u0 = move |x: f64| beta * (PI * x).sin();
    let mut rc = cfg.run;
    rc.variant = variant;
    let out = solver.run(&u0, &rc).map_err(core_error)?;
    let oracle = if out.status == RunStatus::Diverged {
        None
    } else {
        let (ratio, _) = solver.null_control_report(&out.state, &u0, &cfg.forward).map_err(core_error)?;
        Some(ratio)
    };
    let table = emit_table(&out.records).map_err(core_error)?;
    write(&dir, "table.csv", &table)?;
    write(&dir, "records.jsonl", &emit_records(&out.records))?;
    let report = summary(cfg, variant, &out, oracle, start.elapsed().as_secs_f64());
    write(&dir, "report.txt", &report)?;
    print!("{table}");
    eprintln!("status {} after {} iterations; outputs in {}", out.status.name(), out.records.len() - 1, dir.display());
    Ok(match out.status {
        RunStatus::Converged => 0,
        RunStatus::Diverged => EXIT_DIVERGED,
        RunStatus::MaxIter => EXIT_MAXITER,
    })
}

fn check(cli: &Cli, cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let results = check_suite(cfg);
    let mut text = String::new();
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(text, "{tag} {:<30} {:>7.2}s  {}", r.name, r.seconds, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(text, "{} checks, {failed} failed", results.len());
    print!("{text}");
    let dir = output_dir(cli, cfg);
    if std::fs::create_dir_all(&dir).is_ok() {
        write(&dir, "report.txt", &text)?;
    }
    Ok(if failed == 0 { 0 } else { EXIT_CHECK_FAILED })
}

fn table(cli: &Cli, cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let dir = output_dir(cli, cfg);
    let path = dir.join("records.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let records = parse_records(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let csv = emit_table(&records).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    write(&dir, "table.csv", &csv)?;
    print!("{csv}");
    Ok(0)
}

fn main() -> ExitCode {
    let matches = Cli::command().after_help(keys_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    let result = ExperimentConfig::load(cli.config.as_deref(), &cli.set)
        .map_err(Failure::from)
        .and_then(|cfg| match cli.command {
            Command::Run => run(&cli, &cfg, cfg.run.variant),
            Command::Newton => run(&cli, &cfg, Variant::Newton),
            Command::Picard => run(&cli, &cfg, Variant::Picard),
            Command::Check => check(&cli, &cfg),
            Command::Table => table(&cli, &cfg),
        });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
