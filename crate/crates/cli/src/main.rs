use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dsts_core::rng::child_rng;
use dsts_core::runner::{check_calibration, resolve_noise, run_experiment, summarize_dir, ExperimentConfig};
use dsts_core::policies::{PolicyConfig, PolicyKind};
use dsts_core::testbed::TestProblem;

#[derive(Parser)]
#[command(name = "dsts", version, about = "Simulated preferential multi-objective BO experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replication of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild summary.csv from the traces in a run directory.
    Summarize {
        #[arg(long = "in")]
        dir: PathBuf,
    },
    /// Calibrate the preference noise of a test problem and check it on a fresh stream.
    Calibrate {
        #[arg(long)]
        problem: TestProblem,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, workers, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let outcome = run_experiment(&cfg, workers)?;
            let s = &outcome.summary;
            for f in &s.failures {
                eprintln!("replication {} failed: {}", f.replication, f.error);
            }
            if let Some(last) = s.final_row() {
                println!(
                    "{} {} q={}: {}/{} replications, final mean hv {:.6} [{:.6}, {:.6}]",
                    s.problem, s.policy, s.q, s.effective_n, s.n_replications, last.mean_hv, last.lo, last.hi
                );
            }
            println!("wrote {}", cfg.out_dir.join("summary.csv").display());
            Ok(s.failures.is_empty())
        }
        Command::Summarize { dir } => {
            let s = summarize_dir(&dir)?;
            println!("{}/{} replications summarized into {}", s.effective_n, s.n_replications, dir.join("summary.csv").display());
            Ok(s.failures.is_empty())
        }
        Command::Calibrate { problem, seed } => {
            let mut cfg = ExperimentConfig::new(problem, PolicyConfig::new(PolicyKind::Random, 2));
            cfg.seed = seed;
            let noise = resolve_noise(&cfg)?;
            let mut check = child_rng(seed, u64::MAX);
            let rates = (0..noise.lambda.len())
                .map(|j| check_calibration(&cfg, &noise, j, &mut check))
                .collect::<dsts_core::Result<Vec<f64>>>()?;
            let report = serde_json::json!({
                "problem": problem.name(),
                "seed": seed,
                "target_rate": cfg.noise.mistake_rate,
                "lambda": noise.lambda,
                "top_fraction": noise.top_fraction,
                "fresh_rate": rates,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
