//! Command-line surface for the cascade engine: dataset ingestion,
//! configuration, the calibrate/run/report/simulate commands, and report
//! emission.

pub mod checks;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod emit;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use cascade_core::pipeline::Mode;
use error::{CliError, EXIT_CHECK_FAILED};

#[derive(Parser)]
#[command(
    name = "cascade",
    version,
    about = "Calibrated multi-tier LLM cascade with a reusable strategy repository"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Select per-tier deferral thresholds from the calibration set.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Process the test set in one of the three modes.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// inter_cascade | baseline | random_strategies (defaults to the
        /// mode in the config file).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Compare a strategy run against a baseline run of the same stream.
    Report {
        #[arg(long)]
        ours: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        /// Write the machine-readable comparison here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the self-contained theory-validation checks.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Execute a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result: Result<i32, CliError> = match cli.command {
        Command::Calibrate { config } => commands::cmd_calibrate(&config).map(|()| 0),
        Command::Run { config, mode } => {
            let mode = match mode.as_deref().map(str::parse::<Mode>).transpose() {
                Ok(mode) => mode,
                Err(message) => return fail(&CliError::Validation(message)),
            };
            commands::cmd_run(&config, mode).map(|()| 0)
        }
        Command::Report {
            ours,
            baseline,
            output,
        } => commands::cmd_report(&ours, &baseline, output.as_deref()).map(|()| 0),
        Command::Simulate { config } => commands::cmd_simulate(config.as_deref())
            .map(|all_pass| if all_pass { 0 } else { EXIT_CHECK_FAILED }),
    };
    match result {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
