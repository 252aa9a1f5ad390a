//! Batch runner for the weighted Haar experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Sink};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "haarweights", version, about = "Dyadic matrix-weight experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Top-level seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mesh depth; overrides the config.
    #[arg(long, global = true)]
    depth: Option<u32>,
    /// Suppress the summary lines on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write the configured weights U and V as weight files.
    GenWeight,
    /// Joint A2, A2,0 and reverse Hölder constants.
    Check,
    /// Martingale-transform scan, factorization bound, shift and band norms.
    Norms,
    /// Stopping tree, generation decay and off-diagonal tables.
    Stopping,
    /// Monte-Carlo shift averages against the Hilbert transform.
    ShiftAverage,
    /// Everything above, plus one combined JSON report.
    FullReport,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config(config::ConfigError("--config is required".into())))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(depth) = cli.depth {
        config.depth = depth;
        config
            .validate()
            .map_err(|e| CliError::Config(config::ConfigError(format!("{e} (after --depth)"))))?;
    }
    let dir = cli.out.clone().or_else(|| config.out_dir.as_ref().map(|d| config.base_dir.join(d))).unwrap_or_else(|| PathBuf::from("."));
    let sink = Sink::new(dir, cli.quiet)?;
    match cli.command {
        Command::GenWeight => commands::gen_weight(&config, &sink),
        Command::Check => commands::check(&config, &sink),
        Command::Norms => commands::norms(&config, &sink),
        Command::Stopping => commands::stopping(&config, &sink),
        Command::ShiftAverage => commands::shift_average(&config, &sink),
        Command::FullReport => commands::full_report(&config, &sink),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
