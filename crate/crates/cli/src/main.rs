use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use perch_core::config::ExperimentConfig;
use perch_core::experiment::{bench_csv, run_bench, run_sweep, run_trials, sweep_csv};
use perch_core::nmpc::Mode;

#[derive(Parser)]
#[command(name = "perch", version, about = "Vortex-disturbed perching simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    NoDisturbance,
    Uncompensated,
    Compensated,
    All,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::NoDisturbance => vec![Mode::NoDisturbance],
            ModeArg::Uncompensated => vec![Mode::Uncompensated],
            ModeArg::Compensated => vec![Mode::Compensated],
            ModeArg::All => Mode::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Seeded closed-loop perching trials.
    Trial {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        mode: ModeArg,
        /// Overrides the config trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Open- versus closed-loop initial-condition sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Batched rollout timing.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Parses and validates a config, then prints its hash.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("invalid config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn prepare(common: &Common) -> Result<(ExperimentConfig, u64, PathBuf)> {
    let cfg = load(common.config.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, seed, out))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Trial { common, mode, trials } => {
            let (cfg, seed, out) = prepare(&common)?;
            let n = trials.unwrap_or(cfg.trials);
            anyhow::ensure!(n > 0, "--trials must be at least 1");
            let run = run_trials(&cfg, &mode.modes(), seed, n, Some(&out))?;
            for (m, s) in &run.summary.modes {
                println!(
                    "{m}: median {:.4} m (q25 {:.4}, q75 {:.4}) over {} trials",
                    s.median_error_m, s.q25, s.q75, s.trials
                );
            }
            Ok(run.all_completed())
        }
        Command::Sweep { common } => {
            let (cfg, seed, out) = prepare(&common)?;
            let rows = run_sweep(&cfg, seed)?;
            fs::write(out.join("sweep.csv"), sweep_csv(&rows, &cfg, seed))?;
            for r in &rows {
                println!(
                    "{:.3}: open {:.4} m, closed {:.4} m",
                    r.value, r.open_error, r.closed_error
                );
            }
            Ok(rows
                .iter()
                .all(|r| r.open_error.is_finite() && r.closed_error.is_finite()))
        }
        Command::Bench { common } => {
            let (cfg, seed, out) = prepare(&common)?;
            let report = run_bench(&cfg, seed)?;
            fs::write(out.join("bench.csv"), bench_csv(&report))?;
            fs::write(out.join("bench.json"), serde_json::to_string_pretty(&report)?)?;
            for r in &report.rows {
                println!("batch {:5}: {:.4} s", r.batch, r.seconds);
            }
            Ok(true)
        }
        Command::ValidateConfig { config } => {
            let cfg = load(Some(&config))?;
            println!("ok {}", cfg.hash());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("one or more runs did not complete");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
