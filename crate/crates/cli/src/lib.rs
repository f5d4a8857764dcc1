//! Command-line front end: argument parsing, dispatch and exit codes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or domain error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use macdlab_core::backtest::{StrategyMode, DEFAULT_CAPITAL};
use macdlab_core::indicators::MacdParams;
use macdlab_core::metrics::DEFAULT_RISK_FREE_RATE;

mod commands;
pub mod output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io(_) => EXIT_DATA,
        }
    }

    pub(crate) fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "macdlab",
    version,
    about = "MACD strategy backtesting, wavelet denoising and GA parameter search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, clean and summarize a price file.
    Ingest(CommonArgs),
    /// Oscillation ranges and divergence events of one instrument.
    Analyze(SeriesArgs),
    /// Raw and wavelet-smoothed DIF of one instrument.
    Denoise(SeriesArgs),
    /// Backtest one instrument in one strategy mode.
    Backtest(BacktestArgs),
    /// Backtest every instrument in every mode.
    Compare(CompareArgs),
    /// Search MACD periods with the genetic algorithm.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// CSV file with code, date and close columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory; manifest.json is written at its root.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Instrument code; defaults to the first code in the file.
    #[arg(long)]
    pub code: Option<String>,
    /// MACD periods as fast,slow,signal.
    #[arg(long, default_value = "12,26,9")]
    pub params: MacdParams,
}

#[derive(Debug, Args)]
pub struct MoneyArgs {
    /// Starting capital.
    #[arg(long, default_value_t = DEFAULT_CAPITAL)]
    pub capital: f64,
    /// Annual risk-free rate in percent.
    #[arg(long = "risk-free", default_value_t = DEFAULT_RISK_FREE_RATE)]
    pub risk_free: f64,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// raw, denoised or divergence.
    #[arg(long, default_value = "raw")]
    pub mode: StrategyMode,
    #[command(flatten)]
    pub money: MoneyArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "12,26,9")]
    pub params: MacdParams,
    #[command(flatten)]
    pub money: MoneyArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub code: Option<String>,
    #[arg(long, default_value = "divergence")]
    pub mode: StrategyMode,
    /// Population size.
    #[arg(long, default_value_t = 510)]
    pub pop: usize,
    /// Crossover probability.
    #[arg(long, default_value_t = 0.8)]
    pub pc: f64,
    /// Per-gene mutation probability.
    #[arg(long, default_value_t = 0.1)]
    pub pm: f64,
    /// Generations without improvement before stopping.
    #[arg(long, default_value_t = 8)]
    pub patience: usize,
    #[arg(long = "max-gen", default_value_t = 200)]
    pub max_gen: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub money: MoneyArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli.command, &argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
