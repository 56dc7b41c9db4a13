mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Errors with a dedicated exit status.
#[derive(Debug, thiserror::Error)]
pub enum Exit {
    #[error("file not found: {}", .0.display())]
    Missing(PathBuf),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("nothing to report: {0}")]
    Empty(String),
}

impl Exit {
    fn code(&self) -> u8 {
        match self {
            Exit::Missing(_) => 2,
            Exit::Invalid(_) => 1,
            Exit::Empty(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lobmm",
    version,
    about = "Optimal limit-order market making: solve, simulate, estimate, backtest"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, env = "LOBMM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true, env = "LOBMM_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "LOBMM_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "LOBMM_WORKERS")]
    pub workers: Option<usize>,
    /// Terminal inventory penalty.
    #[arg(long, global = true, env = "LOBMM_LAMBDA")]
    pub lambda: Option<f64>,
    /// Calibration window in days.
    #[arg(long, global = true, env = "LOBMM_WINDOW")]
    pub window: Option<usize>,
    /// Comma-separated policies, e.g. `optimal_forecast,optimal_martingale,level_1`.
    #[arg(long, global = true, env = "LOBMM_POLICIES", value_delimiter = ',')]
    pub policies: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coefficient table and spread surface for a parameter file.
    Solve {
        #[arg(long, env = "LOBMM_PARAMS")]
        params: Option<PathBuf>,
    },
    /// Monte-Carlo value of the optimal policy against the solver value.
    Simulate {
        #[arg(long, env = "LOBMM_PARAMS")]
        params: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Write synthetic event files and the parameters that generated them.
    Generate {
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Write CSV instead of binary records.
        #[arg(long)]
        csv: bool,
    },
    /// Daily estimates, rolling parameter files and break flags.
    Estimate {
        /// Directory of event files; synthetic days are generated when absent.
        #[arg(long, env = "LOBMM_DATA")]
        data: Option<PathBuf>,
    },
    /// Rolling calibrate-solve-trade backtest with a summary report.
    Backtest {
        #[arg(long, env = "LOBMM_DATA")]
        data: Option<PathBuf>,
        /// Also write per-step logs of the first backtested day.
        #[arg(long)]
        step_logs: bool,
    },
    /// Aggregate tables from saved day results.
    Report {
        /// `day_results.json` written by `backtest`.
        #[arg(long)]
        results: PathBuf,
        /// `breaks.json` written by `estimate` or `backtest`.
        #[arg(long)]
        breaks: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Exit>().map_or(1, Exit::code);
            ExitCode::from(code)
        }
    }
}
