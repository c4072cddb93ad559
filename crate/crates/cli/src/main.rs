//! Command-line front end: experiment orchestration, deterministic seeding,
//! and emission of all CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing optimizer
//! artifact, 4 validation failure, 5 internal error.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn missing_artifact(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 5,
            message: message.into(),
        }
    }
}

impl From<wavetune_core::Error> for CliError {
    fn from(e: wavetune_core::Error) -> Self {
        CliError::internal(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "wavetune",
    version,
    about = "Simulation and optimization toolkit for time-multiplexed fast-tuning laser transmitters"
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for parallel evaluation (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Include verbose payloads (e.g. the optimized position vector) in
    /// JSON outputs.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shape the SOA gate drive with particle swarm optimization.
    OptimizeSoa,
    /// Tune laser pre-emphasis over an any-to-any switch matrix.
    OptimizeLaser {
        /// Run the full 21-channel (420 event) matrix.
        #[arg(long)]
        full: bool,
    },
    /// Simulate the composed time-multiplexed module and validate slots.
    SimulateSystem {
        /// Run the optimizers on the fly instead of loading artifacts.
        #[arg(long)]
        auto_optimize: bool,
        /// Force both SOA gates on to expose the ungated laser behavior.
        #[arg(long)]
        gates_off: bool,
    },
    /// Tabulate the power-scaling comparison and its crossover point.
    PowerScaling,
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
    wavetune_core::par::configure_workers(cli.workers);
    match &cli.command {
        Command::OptimizeSoa => commands::optimize_soa(&cfg, cli.verbose),
        Command::OptimizeLaser { full } => commands::optimize_laser(&cfg, *full),
        Command::SimulateSystem {
            auto_optimize,
            gates_off,
        } => commands::simulate_system(&cfg, *auto_optimize, *gates_off),
        Command::PowerScaling => commands::power_scaling(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
