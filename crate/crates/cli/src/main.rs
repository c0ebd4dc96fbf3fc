//! `volcast` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volcast::pipeline::ModelVariant;

#[derive(Debug, Parser)]
#[command(name = "volcast", version, about = "GARCH, LSTM and hybrid volatility forecasting")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Preset scale: `paper` (full) or `desk` (small and fast).
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Treat skipped input rows as an error.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Forecasts between GARCH refits in the walk-forward feature.
    #[arg(long, global = true)]
    pub garch_refit_stride: Option<usize>,
    /// S&P 500 price CSV; overrides the configuration.
    #[arg(long, global = true)]
    pub sp500: Option<PathBuf>,
    /// VIX price CSV; overrides the configuration.
    #[arg(long, global = true)]
    pub vix: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate price files and write a joined dataset.
    Ingest,
    /// Select and fit a GARCH model on the full return series.
    FitGarch {
        #[arg(long, default_value_t = 4)]
        p_max: usize,
        #[arg(long, default_value_t = 4)]
        q_max: usize,
    },
    /// Walk-forward backtest of the configured variants.
    Backtest {
        /// Variants to run; defaults to the configuration's list.
        #[arg(long = "variant")]
        variants: Vec<ModelVariant>,
    },
    /// Error metrics of each run in a backtest directory.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Side-by-side comparison of the runs in a backtest directory.
    Compare {
        #[arg(long)]
        run: PathBuf,
        /// Model compared against the others; defaults to LSTM_GARCH_VIX.
        #[arg(long)]
        challenger: Option<ModelVariant>,
    },
    /// Local explanation of one forecast.
    Explain {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        variant: ModelVariant,
        /// Forecast date, YYYY-MM-DD.
        #[arg(long)]
        date: String,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        features: usize,
        #[arg(long)]
        kernel_width: Option<f64>,
    },
    /// Base run plus one run per sweep scenario (the built-in
    /// sensitivity set when the configuration lists none).
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
