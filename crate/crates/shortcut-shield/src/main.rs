//! Thin command-line front end over the library's experiment runner.
//!
//! Success prints a short human-readable summary to stdout and exits 0.
//! Any failure prints a single machine-readable JSON object to stderr:
//!
//! ```json
//! {"error":{"kind":"config","message":"...","exit_code":2}}
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error,
//! 4 strict theory-check failure.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use shortcut_shield::error::{Error, Result};
use shortcut_shield::experiment::{
    run_experiment, run_theory, ExperimentConfig, Stage, TheoryRunConfig,
};

#[derive(Parser)]
#[command(
    name = "shortcut-shield",
    version,
    about = "Shortcut-robust classification experiments on synthetic anti-causal data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training samples and their importance weights.
    Simulate(RunArgs),
    /// Run the cross-validated hyperparameter sweeps.
    Sweep(RunArgs),
    /// Pick a grid point per (seed, method) from the stored sweeps.
    Select(RunArgs),
    /// Retrain the chosen points and evaluate across the shift grid.
    Evaluate(RunArgs),
    /// Run the full pipeline end to end.
    All(RunArgs),
    /// Run the theory checks and write one JSON report per check.
    Theory(TheoryArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Replace the configuration's seed list with this single seed.
    #[arg(long, value_name = "SEED")]
    seed_override: Option<u64>,
    /// Worker-pool size; defaults to $SHORTCUT_SHIELD_JOBS, then the
    /// number of available cores.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Override the configuration's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Theory-run configuration file (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Replace the configuration's seed list with this single seed.
    #[arg(long, value_name = "SEED")]
    seed_override: Option<u64>,
    /// Accepted for interface symmetry; the checks run serially.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Override the configuration's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn resolve_jobs(flag: Option<usize>) -> Result<usize> {
    if let Some(j) = flag {
        if j == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        return Ok(j);
    }
    if let Ok(s) = std::env::var("SHORTCUT_SHIELD_JOBS") {
        let j: usize = s.trim().parse().map_err(|_| {
            Error::Config(format!("SHORTCUT_SHIELD_JOBS must be a positive integer, got {s:?}"))
        })?;
        if j == 0 {
            return Err(Error::Config("SHORTCUT_SHIELD_JOBS must be positive".into()));
        }
        return Ok(j);
    }
    Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

fn run_stage(args: &RunArgs, stage: Stage) -> Result<()> {
    let mut cfg: ExperimentConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    let jobs = resolve_jobs(args.jobs)?;
    let summary = run_experiment(&cfg, stage, jobs)?;
    println!(
        "sweeps: {} computed, {} reused; evaluations: {} computed, {} reused",
        summary.sweeps_computed, summary.sweeps_reused, summary.evals_computed,
        summary.evals_reused
    );
    if summary.rows_written > 0 {
        println!(
            "wrote {} rows to {}",
            summary.rows_written,
            cfg.out_dir.join("results.csv").display()
        );
    }
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn run_theory_command(args: &TheoryArgs) -> Result<()> {
    let mut cfg: TheoryRunConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    resolve_jobs(args.jobs)?;
    let outcome = run_theory(&cfg)?;
    for (check, passed) in &outcome.checks {
        println!("check {check}: {}", if *passed { "pass" } else { "FAIL" });
    }
    println!("reports in {}", cfg.out_dir.display());
    if !outcome.strict_failures.is_empty() {
        return Err(Error::CheckFailed(outcome.strict_failures.join("; ")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => run_stage(args, Stage::Simulate),
        Command::Sweep(args) => run_stage(args, Stage::Sweep),
        Command::Select(args) => run_stage(args, Stage::Select),
        Command::Evaluate(args) => run_stage(args, Stage::Evaluate),
        Command::All(args) => run_stage(args, Stage::All),
        Command::Theory(args) => run_theory_command(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        let payload = serde_json::json!({
            "error": {
                "kind": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            }
        });
        eprintln!("{payload}");
        std::process::exit(e.exit_code());
    }
}
