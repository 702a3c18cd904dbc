// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{ExperimentConfig, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<sparsemag_core::Error> for CliError {
    fn from(e: sparsemag_core::Error) -> Self {
        use sparsemag_core::Error as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::Parse(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

/// Sparse NV-ensemble magnetometry: pulse design, sensing and map reconstruction.
#[derive(Parser)]
#[command(name = "sparsemag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// grid, random, serpentine, spiral or square-loop.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Number of sample points.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// none, bias or proportional.
    #[arg(long, global = true)]
    calibration: Option<String>,
    /// single, double or triple.
    #[arg(long = "field-preset", global = true)]
    field_preset: Option<String>,
    /// rect or pm.
    #[arg(long, global = true)]
    pulse: Option<String>,
    /// Optimizer evaluation budget.
    #[arg(long, global = true)]
    budget: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize phase-modulated pulse parameters against detuning noise.
    OptimizePulse,
    /// Response curves, traces and sensitivity for rectangular and PM sequences.
    Characterize,
    /// Simulate sparse measurements of a preset field.
    Sense,
    /// Fit a kriging model to sensed samples and score it.
    Reconstruct,
    /// Repeat sensing and reconstruction over a range of settings.
    Sweep {
        /// n or strategy.
        #[arg(long)]
        variable: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let variable = match &cli.command {
        Command::Sweep { variable } => variable.clone(),
        _ => None,
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        strategy: cli.strategy,
        n: cli.n,
        calibration: cli.calibration,
        field_preset: cli.field_preset,
        pulse: cli.pulse,
        budget: cli.budget,
        variable,
    };
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::OptimizePulse => commands::optimize_pulse(&cfg),
        Command::Characterize => commands::characterize(&cfg),
        Command::Sense => commands::sense_cmd(&cfg),
        Command::Reconstruct => commands::reconstruct(&cfg),
        Command::Sweep { .. } => commands::sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
