//! Performance metrics of a backtest.
//!
//! All ratios are reported in percent except `total_return`, which is in
//! currency units.

use rust_decimal::prelude::ToPrimitive;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::backtest::TradeLog;

/// Annual yield of one-year government bonds used as the risk-free rate.
pub const DEFAULT_RISK_FREE_RATE: f64 = 2.653;
pub const TRADING_DAYS_PER_YEAR: u32 = 252;

/// Column order of the tabular report.
pub const REPORT_COLUMNS: [&str; 8] = [
    "name",
    "win_rate",
    "odds_ratio",
    "trade_frequency",
    "total_return",
    "annual_return",
    "sharpe_ratio",
    "max_drawdown",
];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("initial value must be positive, got {0}")]
    NonPositiveInitialValue(f64),
    #[error("series span must be at least one day")]
    EmptySpan,
    #[error("invalid risk configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    /// Annual risk-free rate in percent.
    pub risk_free_rate: f64,
    pub trading_days_per_year: u32,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            risk_free_rate: DEFAULT_RISK_FREE_RATE,
            trading_days_per_year: TRADING_DAYS_PER_YEAR,
        }
    }
}

/// Sharpe ratio, or the marker for a flat equity curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sharpe {
    Value(f64),
    Undefined,
}

impl Sharpe {
    pub fn value(self) -> Option<f64> {
        match self {
            Sharpe::Value(v) => Some(v),
            Sharpe::Undefined => None,
        }
    }
}

impl std::fmt::Display for Sharpe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sharpe::Value(v) => write!(f, "{v}"),
            Sharpe::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Sharpe {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Sharpe::Value(v) => serializer.serialize_f64(*v),
            Sharpe::Undefined => serializer.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub win_rate: f64,
    pub odds_ratio: f64,
    pub trade_frequency: f64,
    pub total_return: f64,
    pub annual_return: f64,
    pub sharpe_ratio: Sharpe,
    pub max_drawdown: f64,
}

impl MetricsReport {
    /// Values in [`REPORT_COLUMNS`] order, prefixed by `name`.
    pub fn csv_row(&self, name: &str) -> Vec<String> {
        vec![
            name.to_string(),
            self.win_rate.to_string(),
            self.odds_ratio.to_string(),
            self.trade_frequency.to_string(),
            self.total_return.to_string(),
            self.annual_return.to_string(),
            self.sharpe_ratio.to_string(),
            self.max_drawdown.to_string(),
        ]
    }
}

/// Largest peak-to-trough decline of a value curve, in percent.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in values {
        if v > peak {
            peak = v;
        } else {
            // 1 - v/peak is monotone in peak, so the running peak is the
            // best partner for every later trough.
            worst = worst.max(1.0 - v / peak);
        }
    }
    worst * 100.0
}

/// Daily simple returns of a value curve.
pub fn daily_returns(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Annualized Sharpe ratio of daily returns against an annual rate (fraction).
fn sharpe(returns: &[f64], risk_free: f64, periods: f64) -> Sharpe {
    if returns.len() < 2 {
        return Sharpe::Undefined;
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt() * periods.sqrt();
    if sigma == 0.0 || !sigma.is_finite() {
        return Sharpe::Undefined;
    }
    Sharpe::Value((mean * periods - risk_free) / sigma * 100.0)
}

pub fn compute_metrics(
    log: &TradeLog,
    series_span_days: usize,
    cfg: &RiskConfig,
) -> Result<MetricsReport, MetricsError> {
    if !cfg.risk_free_rate.is_finite() {
        return Err(MetricsError::InvalidConfig("risk-free rate must be finite"));
    }
    if cfg.trading_days_per_year < 1 {
        return Err(MetricsError::InvalidConfig("trading days per year must be at least 1"));
    }
    if series_span_days == 0 {
        return Err(MetricsError::EmptySpan);
    }
    let to_f64 = |d: rust_decimal::Decimal| d.to_f64().unwrap_or(f64::NAN);
    let v_i = to_f64(log.initial_capital);
    if v_i.is_nan() || v_i <= 0.0 {
        return Err(MetricsError::NonPositiveInitialValue(v_i));
    }
    let v_f = to_f64(log.final_equity());
    let span = series_span_days as f64;

    let win_rate = if log.n_sells == 0 {
        0.0
    } else {
        log.n_wins as f64 / log.n_sells as f64 * 100.0
    };

    let losers = log.n_sells - log.n_wins;
    let gross_loss = to_f64(log.gross_loss);
    let odds_ratio = if losers == 0 || log.n_wins == 0 || gross_loss == 0.0 {
        0.0
    } else {
        let avg_win = to_f64(log.gross_profit) / log.n_wins as f64;
        let avg_loss = gross_loss / losers as f64;
        avg_win / avg_loss * 100.0
    };

    let years = span / f64::from(cfg.trading_days_per_year);
    let annual_return = ((v_f / v_i).powf(1.0 / years) - 1.0) * 100.0;

    let equity = log.equity_f64();
    Ok(MetricsReport {
        win_rate,
        odds_ratio,
        trade_frequency: log.n_total as f64 / span * 100.0,
        total_return: v_f - v_i,
        annual_return,
        sharpe_ratio: sharpe(
            &daily_returns(&equity),
            cfg.risk_free_rate / 100.0,
            f64::from(cfg.trading_days_per_year),
        ),
        max_drawdown: max_drawdown(&equity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::{execute, Trade, Trigger, DEFAULT_CAPITAL};
    use crate::indicators::Signal;
    use rust_decimal::Decimal;

    fn trade(pnl: i64) -> Trade {
        let cost = Decimal::from(500_000);
        Trade {
            buy_index: 0,
            sell_index: 1,
            buy_price: Decimal::ONE,
            sell_price: Decimal::ONE,
            quantity: cost,
            cost,
            proceeds: cost + Decimal::from(pnl),
            pnl: Decimal::from(pnl),
            entry_trigger: Trigger::Cross,
            trigger: Trigger::Cross,
        }
    }

    fn log_of(pnls: &[i64], equity: &[i64]) -> TradeLog {
        TradeLog::new(
            pnls.iter().map(|&p| trade(p)).collect(),
            equity.iter().map(|&e| Decimal::from(e)).collect(),
            Decimal::from(500_000),
        )
    }

    #[test]
    fn win_rate_counts_profitable_sells() {
        let log = log_of(&[1, 2, 3, -1, -2], &[500_000, 500_003]);
        let m = compute_metrics(&log, 100, &RiskConfig::default()).unwrap();
        assert!((m.win_rate - 60.0).abs() < 1e-12);
        assert!((m.trade_frequency - 10.0).abs() < 1e-12);
    }

    #[test]
    fn odds_ratio_by_hand() {
        let log = log_of(&[10_000, 20_000, -5_000], &[500_000, 525_000]);
        let m = compute_metrics(&log, 100, &RiskConfig::default()).unwrap();
        assert!((m.odds_ratio - 300.0).abs() < 1e-9);
    }

    #[test]
    fn odds_ratio_without_losses_is_zero() {
        let log = log_of(&[10_000, 20_000], &[500_000, 530_000]);
        let m = compute_metrics(&log, 100, &RiskConfig::default()).unwrap();
        assert_eq!(m.win_rate, 100.0);
        assert_eq!(m.odds_ratio, 0.0);
    }

    #[test]
    fn annual_return_by_hand() {
        // two years of data, 500000 -> 605000
        let log = log_of(&[105_000], &[500_000, 605_000]);
        let m = compute_metrics(&log, 504, &RiskConfig::default()).unwrap();
        assert!((m.annual_return - 10.0).abs() < 1e-9);
        assert_eq!(m.total_return, 105_000.0);
    }

    #[test]
    fn flat_equity() {
        let log = log_of(&[], &[500_000; 10]);
        let m = compute_metrics(&log, 10, &RiskConfig::default()).unwrap();
        assert_eq!(m.sharpe_ratio, Sharpe::Undefined);
        assert_eq!(m.annual_return, 0.0);
        assert_eq!(m.max_drawdown, 0.0);
        assert_eq!(m.win_rate, 0.0);
    }

    #[test]
    fn drawdown_by_hand() {
        assert!((max_drawdown(&[100.0, 120.0, 90.0, 110.0]) - 25.0).abs() < 1e-12);
        assert_eq!(max_drawdown(&[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn sharpe_of_a_known_curve() {
        let log = execute(
            &[100.0, 100.0, 110.0, 99.0, 120.0],
            &[Signal::Hold, Signal::Buy, Signal::Hold, Signal::Hold, Signal::Hold]
                .iter()
                .map(|&s| (s, Trigger::Cross))
                .collect::<Vec<_>>(),
            DEFAULT_CAPITAL,
        )
        .unwrap();
        let m = compute_metrics(&log, 5, &RiskConfig::default()).unwrap();
        // returns 0, 0.1, -0.1, 20/99 - 1... computed by hand below
        let r = [0.0, 0.1, -0.1, 120.0 / 99.0 - 1.0];
        let mean = r.iter().sum::<f64>() / 4.0;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        let expected = (mean * 252.0 - 0.02653) / (sd * 252f64.sqrt()) * 100.0;
        let got = m.sharpe_ratio.value().unwrap();
        assert!((got - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn error_paths() {
        let log = log_of(&[], &[500_000]);
        assert_eq!(
            compute_metrics(&log, 0, &RiskConfig::default()),
            Err(MetricsError::EmptySpan)
        );
        let mut bad = log.clone();
        bad.initial_capital = Decimal::ZERO;
        assert!(matches!(
            compute_metrics(&bad, 1, &RiskConfig::default()),
            Err(MetricsError::NonPositiveInitialValue(_))
        ));
        let cfg = RiskConfig {
            risk_free_rate: f64::NAN,
            ..RiskConfig::default()
        };
        assert!(compute_metrics(&log, 1, &cfg).is_err());
    }

    #[test]
    fn undefined_sharpe_serializes_as_marker() {
        assert_eq!(Sharpe::Undefined.to_string(), "undefined");
        assert_eq!(Sharpe::Value(1.5).to_string(), "1.5");
    }
}
