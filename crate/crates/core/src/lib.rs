//! MACD trading laboratory.
//!
//! The pipeline runs in the order of the modules below: closes are loaded
//! and cleaned ([`ingest`]), turned into DIF/DEA/MACD ([`indicators`]),
//! optionally smoothed with a coif5 wavelet ([`wavelet`]), scanned for
//! oscillation ranges and divergences ([`analysis`]), traded
//! ([`backtest`]) and scored ([`metrics`]). [`optimizer`] searches the MACD
//! periods with a genetic algorithm whose fitness is backtest profit.

pub mod analysis;
pub mod backtest;
pub mod indicators;
pub mod ingest;
pub mod metrics;
pub mod optimizer;
pub mod wavelet;

pub use analysis::{detect_divergences, detect_oscillation, DivergenceEvent, DivergenceKind, OscillationMask};
pub use backtest::{run_backtest, StrategyMode, Trade, TradeLog, Trigger};
pub use indicators::{compute_indicators, cross_signals, ema, IndicatorSeries, MacdParams, Signal};
pub use ingest::{clean, load_csv, PriceSeries};
pub use metrics::{compute_metrics, MetricsReport, RiskConfig, Sharpe};
pub use optimizer::{optimize, GaConfig, OptimizeResult};
pub use wavelet::{denoise_dif, WaveletFilter};
