//! Long-only, all-in backtesting of MACD crossover strategies.
//!
//! Money is held as [`Decimal`] rounded to [`MONEY_DP`] places so that cash
//! moves only by exact additions; the sum of trade P&L therefore equals the
//! change in equity to the last digit.

use rust_decimal::prelude::{FromPrimitive, ToPrimitive};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{find_divergences, AnalysisError, DivergenceEvent, DivergenceKind, PROMINENCE_WINDOW};
use crate::indicators::{cross_signals, ema, macd_from_closes, IndicatorError, IndicatorSeries, MacdParams, Signal};
use crate::ingest::PriceSeries;
use crate::wavelet::{denoise_dif, WaveletError, DENOISE_LEVELS};

/// Starting principal.
pub const DEFAULT_CAPITAL: f64 = 500_000.0;
/// Decimal places kept for cash and position values.
pub const MONEY_DP: u32 = 8;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("series too short: {len} closes, need at least {required}")]
    TooShort { len: usize, required: usize },
    #[error(transparent)]
    Params(#[from] IndicatorError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("initial capital must be positive and finite, got {0}")]
    InvalidCapital(f64),
    #[error("close {value} on day {day} cannot be used as a price")]
    InvalidPrice { day: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    /// Crossovers of the raw DIF and DEA.
    Raw,
    /// Crossovers of the wavelet-smoothed DIF and its recomputed DEA.
    Denoised,
    /// Denoised crossovers, overridden by price/MACD divergences.
    DenoisedWithDivergence,
}

impl StrategyMode {
    pub const ALL: [StrategyMode; 3] = [
        StrategyMode::Raw,
        StrategyMode::Denoised,
        StrategyMode::DenoisedWithDivergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyMode::Raw => "raw",
            StrategyMode::Denoised => "denoised",
            StrategyMode::DenoisedWithDivergence => "divergence",
        }
    }

    fn uses_wavelet(self) -> bool {
        self != StrategyMode::Raw
    }
}

impl std::fmt::Display for StrategyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(StrategyMode::Raw),
            "denoised" => Ok(StrategyMode::Denoised),
            "divergence" | "denoised_with_divergence" => Ok(StrategyMode::DenoisedWithDivergence),
            _ => Err(format!("unknown mode `{s}` (expected raw, denoised or divergence)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Cross,
    Divergence,
    FinalLiquidation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trade {
    pub buy_index: usize,
    pub sell_index: usize,
    #[serde(with = "rust_decimal::serde::float")]
    pub buy_price: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub sell_price: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub quantity: Decimal,
    /// Cash committed at the buy.
    #[serde(with = "rust_decimal::serde::float")]
    pub cost: Decimal,
    /// Cash received at the sell.
    #[serde(with = "rust_decimal::serde::float")]
    pub proceeds: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub pnl: Decimal,
    pub entry_trigger: Trigger,
    /// What closed the position.
    pub trigger: Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeLog {
    pub trades: Vec<Trade>,
    #[serde(skip)]
    pub equity: Vec<Decimal>,
    #[serde(with = "rust_decimal::serde::float")]
    pub initial_capital: Decimal,
    /// Buys plus sells.
    pub n_total: usize,
    pub n_sells: usize,
    pub n_wins: usize,
    #[serde(with = "rust_decimal::serde::float")]
    pub gross_profit: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub gross_loss: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub net: Decimal,
}

impl TradeLog {
    /// Derives the trade counts and P&L totals from closed trades.
    pub fn new(trades: Vec<Trade>, equity: Vec<Decimal>, initial_capital: Decimal) -> Self {
        let n_sells = trades.len();
        let n_wins = trades.iter().filter(|t| t.pnl > Decimal::ZERO).count();
        let gross_profit = trades
            .iter()
            .filter(|t| t.pnl > Decimal::ZERO)
            .map(|t| t.pnl)
            .sum::<Decimal>();
        let gross_loss = trades
            .iter()
            .filter(|t| t.pnl < Decimal::ZERO)
            .map(|t| -t.pnl)
            .sum::<Decimal>();
        Self {
            n_total: 2 * n_sells,
            n_sells,
            n_wins,
            net: gross_profit - gross_loss,
            gross_profit,
            gross_loss,
            trades,
            equity,
            initial_capital,
        }
    }

    pub fn final_equity(&self) -> Decimal {
        self.equity.last().copied().unwrap_or(self.initial_capital)
    }

    pub fn equity_f64(&self) -> Vec<f64> {
        self.equity.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

/// Everything a strategy derives from prices before any order is placed.
#[derive(Debug, Clone)]
pub struct StrategySignals {
    pub mode: StrategyMode,
    pub params: MacdParams,
    /// Indicators of the raw closes.
    pub raw: IndicatorSeries,
    /// Wavelet-smoothed DIF; only computed by the modes that trade on it.
    pub denoised_dif: Option<Vec<f64>>,
    /// Indicators whose crossings drive the strategy.
    pub trading: IndicatorSeries,
    pub signals: Vec<Signal>,
    pub divergences: Vec<DivergenceEvent>,
}

/// DEA and histogram over a smoothed DIF curve.
pub fn recompute_dea_from_denoised(denoised_dif: &[f64], signal: usize) -> Result<IndicatorSeries, IndicatorError> {
    let dea = ema(denoised_dif, signal)?;
    IndicatorSeries::from_dif_dea(denoised_dif.to_vec(), dea)
}

/// Minimum closes a mode needs with the given parameters.
pub fn required_length(params: MacdParams, mode: StrategyMode) -> usize {
    let mut required = params.slow.max(2);
    if mode.uses_wavelet() {
        required = required.max(1 << DENOISE_LEVELS);
    }
    required
}

pub fn prepare_signals(
    prices: &PriceSeries,
    params: MacdParams,
    mode: StrategyMode,
) -> Result<StrategySignals, BacktestError> {
    params.validate()?;
    let closes = &prices.closes;
    let required = required_length(params, mode);
    if closes.len() < required {
        return Err(BacktestError::TooShort {
            len: closes.len(),
            required,
        });
    }
    let raw = macd_from_closes(closes, params)?;
    let denoised_dif = if mode.uses_wavelet() {
        Some(denoise_dif(raw.dif())?)
    } else {
        None
    };
    let trading = match (mode, &denoised_dif) {
        (StrategyMode::Raw, _) => raw.clone(),
        (_, Some(d)) => recompute_dea_from_denoised(d, params.signal)?,
        (_, None) => unreachable!("wavelet modes always smooth"),
    };
    let signals = cross_signals(&trading);
    let divergences = if mode == StrategyMode::DenoisedWithDivergence && closes.len() >= PROMINENCE_WINDOW + 2 {
        find_divergences(closes, raw.macd())?
    } else {
        Vec::new()
    };
    Ok(StrategySignals {
        mode,
        params,
        raw,
        denoised_dif,
        trading,
        signals,
        divergences,
    })
}

/// Order intent per day after divergence overrides.
pub fn daily_actions(prepared: &StrategySignals) -> Vec<(Signal, Trigger)> {
    let mut actions: Vec<_> = prepared.signals.iter().map(|&s| (s, Trigger::Cross)).collect();
    for event in &prepared.divergences {
        let day = event.confirmation_index();
        if let Some(slot) = actions.get_mut(day) {
            let signal = match event.kind {
                DivergenceKind::Top => Signal::Sell,
                DivergenceKind::Bottom => Signal::Buy,
            };
            *slot = (signal, Trigger::Divergence);
        }
    }
    actions
}

fn money(v: Decimal) -> Decimal {
    v.round_dp(MONEY_DP)
}

/// Runs daily order intents over closes.
///
/// Buys commit all cash at the day's close, sells liquidate everything;
/// intents that do not change the position are ignored, as is a buy on the
/// final day. A position still open at the end is sold at the last close.
pub fn execute(closes: &[f64], actions: &[(Signal, Trigger)], initial_capital: f64) -> Result<TradeLog, BacktestError> {
    assert_eq!(closes.len(), actions.len(), "one action per close");
    if !(initial_capital.is_finite() && initial_capital > 0.0) {
        return Err(BacktestError::InvalidCapital(initial_capital));
    }
    let initial = Decimal::from_f64(initial_capital)
        .map(money)
        .ok_or(BacktestError::InvalidCapital(initial_capital))?;
    let prices = closes
        .iter()
        .enumerate()
        .map(|(day, &c)| {
            Decimal::from_f64(c)
                .filter(|p| *p > Decimal::ZERO)
                .ok_or(BacktestError::InvalidPrice { day, value: c })
        })
        .collect::<Result<Vec<_>, _>>()?;

    struct Open {
        day: usize,
        price: Decimal,
        quantity: Decimal,
        cost: Decimal,
        trigger: Trigger,
    }

    let last = prices.len().saturating_sub(1);
    let mut cash = initial;
    let mut position: Option<Open> = None;
    let mut trades = Vec::new();
    let mut equity = Vec::with_capacity(prices.len());

    for (day, (&price, &(signal, trigger))) in prices.iter().zip(actions).enumerate() {
        let is_last = day == last;
        match (&position, signal) {
            (None, Signal::Buy) if !is_last => {
                position = Some(Open {
                    day,
                    price,
                    quantity: cash / price,
                    cost: cash,
                    trigger,
                });
                cash = Decimal::ZERO;
            }
            _ => {}
        }
        let sell_trigger = match (&position, signal) {
            (Some(open), Signal::Sell) if open.day < day => Some(trigger),
            (Some(open), _) if is_last && open.day < day => Some(Trigger::FinalLiquidation),
            _ => None,
        };
        if let Some(exit) = sell_trigger {
            let open = position.take().expect("position checked above");
            let proceeds = money(open.quantity * price);
            trades.push(Trade {
                buy_index: open.day,
                sell_index: day,
                buy_price: open.price,
                sell_price: price,
                quantity: open.quantity,
                cost: open.cost,
                proceeds,
                pnl: proceeds - open.cost,
                entry_trigger: open.trigger,
                trigger: exit,
            });
            cash += proceeds;
        }
        let marked = match &position {
            Some(open) => cash + money(open.quantity * price),
            None => cash,
        };
        equity.push(marked);
    }
    Ok(TradeLog::new(trades, equity, initial))
}

pub fn run_backtest(prices: &PriceSeries, params: MacdParams, mode: StrategyMode) -> Result<TradeLog, BacktestError> {
    run_backtest_with_capital(prices, params, mode, DEFAULT_CAPITAL)
}

pub fn run_backtest_with_capital(
    prices: &PriceSeries,
    params: MacdParams,
    mode: StrategyMode,
    initial_capital: f64,
) -> Result<TradeLog, BacktestError> {
    let prepared = prepare_signals(prices, params, mode)?;
    execute(&prices.closes, &daily_actions(&prepared), initial_capital)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(v: i64) -> Decimal {
        Decimal::from(v)
    }

    fn actions(days: &[Signal]) -> Vec<(Signal, Trigger)> {
        days.iter().map(|&s| (s, Trigger::Cross)).collect()
    }

    use Signal::{Buy, Hold, Sell};

    #[test]
    fn no_signals_no_trades() {
        let log = execute(&[100.0; 5], &actions(&[Hold; 5]), DEFAULT_CAPITAL).unwrap();
        assert!(log.trades.is_empty());
        assert!(log.equity.iter().all(|&e| e == dec(500_000)));
        assert_eq!(log.net, Decimal::ZERO);
    }

    #[test]
    fn buy_then_sell_by_hand() {
        let log = execute(
            &[100.0, 100.0, 110.0, 120.0],
            &actions(&[Hold, Buy, Sell, Hold]),
            DEFAULT_CAPITAL,
        )
        .unwrap();
        assert_eq!(log.trades.len(), 1);
        let t = &log.trades[0];
        assert_eq!(t.quantity, dec(5000));
        assert_eq!(t.pnl, dec(50_000));
        assert_eq!(t.trigger, Trigger::Cross);
        assert_eq!(log.final_equity(), dec(550_000));
        assert_eq!((log.n_total, log.n_sells, log.n_wins), (2, 1, 1));
    }

    #[test]
    fn open_position_is_liquidated_at_the_end() {
        let log = execute(
            &[100.0, 100.0, 105.0, 110.0],
            &actions(&[Hold, Buy, Hold, Hold]),
            DEFAULT_CAPITAL,
        )
        .unwrap();
        assert_eq!(log.trades.len(), 1);
        assert_eq!(log.trades[0].trigger, Trigger::FinalLiquidation);
        assert_eq!(log.trades[0].pnl, dec(50_000));
        assert_eq!(log.n_sells, 1);
        assert_eq!(log.equity[2], dec(525_000));
    }

    #[test]
    fn redundant_signals_are_ignored() {
        let log = execute(
            &[100.0, 100.0, 90.0, 80.0, 80.0, 88.0],
            &actions(&[Hold, Buy, Buy, Sell, Sell, Hold]),
            DEFAULT_CAPITAL,
        )
        .unwrap();
        assert_eq!(log.trades.len(), 1);
        assert_eq!(log.trades[0].sell_index, 3);
        assert_eq!(log.gross_loss, dec(100_000));
        assert_eq!(log.net, dec(-100_000));
        assert_eq!(log.final_equity(), dec(400_000));
    }

    #[test]
    fn buy_on_last_day_is_skipped() {
        let log = execute(&[100.0, 101.0, 102.0], &actions(&[Hold, Hold, Buy]), DEFAULT_CAPITAL).unwrap();
        assert!(log.trades.is_empty());
    }

    #[test]
    fn invalid_capital_rejected() {
        assert!(matches!(
            execute(&[1.0], &actions(&[Hold]), 0.0),
            Err(BacktestError::InvalidCapital(_))
        ));
    }

    #[test]
    fn too_short_series() {
        let prices = PriceSeries::from_closes("X", vec![100.0; 5]);
        match run_backtest(&prices, MacdParams::default(), StrategyMode::Raw) {
            Err(BacktestError::TooShort { len: 5, required: 26 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let prices = PriceSeries::from_closes("X", vec![100.0; 10]);
        let p = MacdParams::new(2, 5, 3).unwrap();
        assert!(run_backtest(&prices, p, StrategyMode::Raw).is_ok());
        assert!(matches!(
            run_backtest(&prices, p, StrategyMode::Denoised),
            Err(BacktestError::TooShort { required: 16, .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let prices = PriceSeries::from_closes("X", vec![100.0; 60]);
        let p = MacdParams {
            fast: 26,
            slow: 12,
            signal: 9,
        };
        assert!(matches!(
            run_backtest(&prices, p, StrategyMode::Raw),
            Err(BacktestError::Params(_))
        ));
    }

    #[test]
    fn dea_over_constant_denoised_dif() {
        let ind = recompute_dea_from_denoised(&[0.7; 20], 9).unwrap();
        assert_eq!(ind.dea(), ind.dif());
        assert!(ind.macd().iter().all(|&m| m == 0.0));
        assert!(cross_signals(&ind).iter().all(|&s| s == Hold));
    }

    #[test]
    fn dea_with_signal_period_one_copies_dif() {
        let dif = [0.1, -0.4, 0.9, 0.3];
        let ind = recompute_dea_from_denoised(&dif, 1).unwrap();
        assert_eq!(ind.dea(), &dif);
        assert!(ind.macd().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn ramp_then_flat_dif_crosses_once() {
        // dif rises from -1 to 1 then holds; the lagging dea is crossed once
        let dif: Vec<f64> = (0..40)
            .map(|t| if t < 20 { -1.0 + t as f64 * 0.1 } else { 1.0 })
            .collect();
        let ind = recompute_dea_from_denoised(&dif, 9).unwrap();
        let signals = cross_signals(&ind);
        assert_eq!(signals.iter().filter(|&&s| s == Buy).count(), 1);
        assert_eq!(signals.iter().filter(|&&s| s == Sell).count(), 0);
    }

    #[test]
    fn divergence_overrides_cross_signal() {
        let closes = vec![100.0; 30];
        let prices = PriceSeries::from_closes("X", closes);
        let mut prepared =
            prepare_signals(&prices, MacdParams::default(), StrategyMode::DenoisedWithDivergence).unwrap();
        prepared.signals[21] = Buy;
        prepared.divergences.push(DivergenceEvent {
            kind: DivergenceKind::Top,
            current_extreme_index: 20,
            previous_extreme_index: 5,
            price_at_extremes: (1.0, 2.0),
            macd_at_extremes: (2.0, 1.0),
        });
        let actions = daily_actions(&prepared);
        assert_eq!(actions[21], (Sell, Trigger::Divergence));
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in StrategyMode::ALL {
            assert_eq!(mode.as_str().parse::<StrategyMode>().unwrap(), mode);
        }
        assert!("fancy".parse::<StrategyMode>().is_err());
    }
}
