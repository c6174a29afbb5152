//! Experiment runner CLI: `validate`, `run`, and `sweep`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use fedgram::config::ExperimentConfig;
use fedgram::report::{load_validated, run_to_dir, sweep_to_dir, SweepAxis};

#[derive(Parser)]
#[command(name = "fedgram", version, about = "Deterministic federated-learning robustness lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file against the full schema and invariants.
    Validate { config: PathBuf },
    /// Run one experiment and write metrics under --out.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one experiment per axis value and join the summaries.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let cfg = match ExperimentConfig::from_toml_str(&text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    return ExitCode::from(2);
                }
            };
            let violations = cfg.validate();
            if violations.is_empty() {
                println!("ok: {} is valid", config.display());
                ExitCode::SUCCESS
            } else {
                println!("{} violation(s):", violations.len());
                for v in &violations {
                    println!("  - {v}");
                }
                ExitCode::from(2)
            }
        }
        Command::Run { config, out, seed } => {
            let cfg = match load_validated(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let rounds = cfg.rounds;
            match run_to_dir(&cfg, &out, seed, |record| {
                if record.round % 10 == 0 || record.round == rounds {
                    println!(
                        "round {:>4}/{}: accuracy {:.4}, best {:.4}",
                        record.round, rounds, record.test_accuracy, record.best_accuracy
                    );
                }
            }) {
                Ok(summary) => {
                    println!(
                        "done: best {:.4}, final {:.4} -> {}",
                        summary.best_accuracy,
                        summary.final_accuracy,
                        out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = match load_validated(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let axis = match SweepAxis::from_str(&axis) {
                Ok(axis) => axis,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(String::from)
                .collect();
            if values.is_empty() {
                eprintln!("error: empty sweep value list");
                return ExitCode::from(2);
            }
            // Fail fast on unusable values before any run starts.
            for v in &values {
                if let Err(e) = axis.apply(&cfg, v) {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            match sweep_to_dir(&cfg, axis, &values, &out, |value, summary| {
                println!(
                    "{}={}: best {:.4}, final {:.4}",
                    axis.name(),
                    value,
                    summary.best_accuracy,
                    summary.final_accuracy
                );
            }) {
                Ok(_) => {
                    println!("sweep summary -> {}", out.join("sweep_summary.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
