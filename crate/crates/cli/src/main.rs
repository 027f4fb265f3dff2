//! `nngp`: simulate, fit, predict and benchmark NNGP spatial regressions.

mod commands;
mod config;
mod error;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Toy;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "nngp", version, about = "Bayesian NNGP spatial regression")]
struct Cli {
    /// Run configuration (fit) or benchmark design (color-bench).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or output file for predict.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulates a toy dataset together with its truth and a fit config.
    Simulate {
        #[arg(value_enum)]
        kind: Toy,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
    },
    /// Fits the model described by --config.
    Fit,
    /// Predicts the latent field at new locations from a fit directory.
    Predict { fit_dir: PathBuf, locations: PathBuf },
    /// Benchmarks graph coloring over a factorial design.
    ColorBench,
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { kind, n } => {
            let seed = cli.seed.ok_or_else(|| CliError::Config("simulate needs --seed".into()))?;
            let out = cli.out.ok_or_else(|| CliError::Config("simulate needs --out".into()))?;
            commands::simulate(kind, n, seed, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Fit => {
            let path = cli.config.ok_or_else(|| CliError::Config("fit needs --config".into()))?;
            let mut cfg = RunConfig::from_file(&path)?;
            if let Some(s) = cli.seed {
                cfg.sampler.seed = s;
                cfg.spec.ordering_seed = s;
            }
            let out = cli
                .out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("fit"));
            let warnings = commands::fit(&cfg, &out)?;
            warn_all(&warnings);
            println!("wrote {}", out.display());
        }
        Command::Predict { fit_dir, locations } => {
            let out = cli.out.unwrap_or_else(|| fit_dir.join("predictions.csv"));
            let n = commands::predict_cmd(&fit_dir, &locations, &out)?;
            println!("wrote {n} predictions to {}", out.display());
        }
        Command::ColorBench => {
            let out = cli.out.ok_or_else(|| CliError::Config("color-bench needs --out".into()))?;
            let warnings = commands::color_bench(cli.config.as_deref(), cli.seed, &out)?;
            warn_all(&warnings);
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
