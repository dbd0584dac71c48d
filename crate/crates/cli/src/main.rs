//! Batch front door for the contagion engine.
//!
//! Exit codes: 0 ok, 2 config/input error, 3 pricing error, 4 calibration
//! failure.

mod commands;
mod config;
mod output;
mod quotes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use output::OutDir;

/// Stage at which a command failed; maps onto the exit code contract.
#[derive(Debug)]
pub enum Stage {
    Config(anyhow::Error),
    Pricing(anyhow::Error),
    Calibration(anyhow::Error),
}

impl Stage {
    fn pricing(e: contagion_core::error::Error) -> Stage {
        Stage::Pricing(anyhow::anyhow!("{e}"))
    }

    fn report(&self) -> ExitCode {
        match self {
            Stage::Config(e) => {
                eprintln!("config/input error: {e:#}");
                ExitCode::from(2)
            }
            Stage::Pricing(e) => {
                eprintln!("pricing error: {e:#}");
                ExitCode::from(3)
            }
            Stage::Calibration(e) => {
                eprintln!("calibration failed: {e:#}");
                ExitCode::from(4)
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "contagion",
    about = "Default-contagion engine: CDO tranche pricing, simulation and calibration",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the seed from the config (Monte Carlo and calibration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the internal thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Tranche spread table and loss curves for the configured deck.
    Price { config: PathBuf },
    /// One-factor sweep of tranche spreads.
    Sensitivity {
        config: PathBuf,
        /// Factor to sweep: rho, delta, m, R, kappa or sigma.
        #[arg(long)]
        factor: String,
        /// Grid as lo:hi:count.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
    /// Fit the homogeneous model to market tranche quotes.
    Calibrate { config: PathBuf, quotes: PathBuf },
    /// Per-instrument implied contagion rate at frozen parameters.
    ImpliedRho { config: PathBuf, quotes: PathBuf },
    /// Monte Carlo scenarios and spread cross-check.
    Simulate { config: PathBuf },
}

fn run(cli: &Cli) -> Result<(), Stage> {
    if let Some(t) = cli.threads {
        // ignore failure if a pool already exists (tests call run() twice)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let config_path = match &cli.command {
        Command::Price { config }
        | Command::Sensitivity { config, .. }
        | Command::Calibrate { config, .. }
        | Command::ImpliedRho { config, .. }
        | Command::Simulate { config } => config.clone(),
    };
    let cfg = RunConfig::load(&config_path).map_err(Stage::Config)?;
    let out = OutDir::create(&cli.out_dir).map_err(Stage::Config)?;
    match &cli.command {
        Command::Price { .. } => commands::cmd_price(&cfg, &out),
        Command::Sensitivity { factor, grid, .. } => {
            commands::cmd_sensitivity(&cfg, factor, grid, &out)
        }
        Command::Calibrate { quotes, .. } => {
            commands::cmd_calibrate(&cfg, quotes, cli.seed, &out)
        }
        Command::ImpliedRho { quotes, .. } => commands::cmd_implied_rho(&cfg, quotes, &out),
        Command::Simulate { .. } => commands::cmd_simulate(&cfg, cli.seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(stage) => stage.report(),
    }
}
