//! EMA, DIF/DEA/MACD histogram and crossover signals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PriceSeries;

#[derive(Debug, Error, PartialEq)]
pub enum IndicatorError {
    #[error("cannot compute a moving average of an empty series")]
    EmptyInput,
    #[error("moving-average period must be at least 1, got {0}")]
    InvalidPeriod(usize),
    #[error("invalid MACD parameters ({fast}, {slow}, {signal}): {reason}")]
    InvalidParams {
        fast: usize,
        slow: usize,
        signal: usize,
        reason: &'static str,
    },
    #[error("indicator arrays are misaligned ({dif} dif, {dea} dea values)")]
    Misaligned { dif: usize, dea: usize },
}

/// Fast, slow and signal EMA periods, in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MacdParams {
    pub fast: usize,
    pub slow: usize,
    pub signal: usize,
}

impl Default for MacdParams {
    fn default() -> Self {
        Self {
            fast: 12,
            slow: 26,
            signal: 9,
        }
    }
}

impl MacdParams {
    pub fn new(fast: usize, slow: usize, signal: usize) -> Result<Self, IndicatorError> {
        let p = Self { fast, slow, signal };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), IndicatorError> {
        let err = |reason| IndicatorError::InvalidParams {
            fast: self.fast,
            slow: self.slow,
            signal: self.signal,
            reason,
        };
        if self.fast < 1 || self.slow < 1 || self.signal < 1 {
            return Err(err("every period must be at least 1"));
        }
        if self.fast >= self.slow {
            return Err(err("fast period must be shorter than slow period"));
        }
        Ok(())
    }
}

impl std::fmt::Display for MacdParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.fast, self.slow, self.signal)
    }
}

impl std::str::FromStr for MacdParams {
    type Err = String;

    /// Parses `"x,y,z"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<_> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected three comma-separated periods, got `{s}`"));
        }
        let mut v = [0usize; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| format!("`{part}` is not a positive integer"))?;
        }
        MacdParams::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
    }
}

/// DIF, DEA and MACD histogram aligned to a price axis.
///
/// Only constructible from DIF and DEA so that `macd == 2·(dif − dea)`
/// holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorSeries {
    dif: Vec<f64>,
    dea: Vec<f64>,
    macd: Vec<f64>,
}

impl IndicatorSeries {
    pub fn from_dif_dea(dif: Vec<f64>, dea: Vec<f64>) -> Result<Self, IndicatorError> {
        if dif.len() != dea.len() {
            return Err(IndicatorError::Misaligned {
                dif: dif.len(),
                dea: dea.len(),
            });
        }
        let macd = dif.iter().zip(&dea).map(|(d, e)| 2.0 * (d - e)).collect();
        Ok(Self { dif, dea, macd })
    }

    /// DEA recomputed as the `signal`-period EMA of the given DIF.
    pub fn from_dif(dif: Vec<f64>, signal: usize) -> Result<Self, IndicatorError> {
        let dea = ema(&dif, signal)?;
        Self::from_dif_dea(dif, dea)
    }

    pub fn dif(&self) -> &[f64] {
        &self.dif
    }

    pub fn dea(&self) -> &[f64] {
        &self.dea
    }

    pub fn macd(&self) -> &[f64] {
        &self.macd
    }

    pub fn len(&self) -> usize {
        self.dif.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dif.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Buy,
    Sell,
    #[serde(rename = "none")]
    Hold,
}

impl Signal {
    pub fn as_str(self) -> &'static str {
        match self {
            Signal::Buy => "buy",
            Signal::Sell => "sell",
            Signal::Hold => "none",
        }
    }
}

/// Exponential moving average with `α = 2/(n+1)`, seeded with the first value.
pub fn ema(values: &[f64], n: usize) -> Result<Vec<f64>, IndicatorError> {
    if n < 1 {
        return Err(IndicatorError::InvalidPeriod(n));
    }
    let (&first, rest) = values.split_first().ok_or(IndicatorError::EmptyInput)?;
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut prev = first;
    out.push(prev);
    for &v in rest {
        prev = alpha * v + (1.0 - alpha) * prev;
        out.push(prev);
    }
    Ok(out)
}

/// DIF, DEA and histogram from raw closes.
///
/// Periods are only checked for being positive; `fast < slow` is the
/// caller's business (see [`MacdParams::validate`]).
pub fn macd_from_closes(closes: &[f64], params: MacdParams) -> Result<IndicatorSeries, IndicatorError> {
    let fast = ema(closes, params.fast)?;
    let slow = ema(closes, params.slow)?;
    let dif = fast.iter().zip(&slow).map(|(f, s)| f - s).collect();
    IndicatorSeries::from_dif(dif, params.signal)
}

pub fn compute_indicators(prices: &PriceSeries, params: MacdParams) -> Result<IndicatorSeries, IndicatorError> {
    macd_from_closes(&prices.closes, params)
}

/// Crossings of DIF over DEA.
///
/// A buy fires on the day DIF moves strictly above DEA after last being
/// at or below it; a sell on the mirrored downward move. Days where the
/// two lines touch count toward neither side, so a touch followed by a
/// return to the same side is not a new cross.
pub fn cross_signals(ind: &IndicatorSeries) -> Vec<Signal> {
    let mut signals = vec![Signal::Hold; ind.len()];
    // sign of dif - dea on the most recent day where they differed
    let mut last_side = 0i8;
    for (t, (d, e)) in ind.dif.iter().zip(&ind.dea).enumerate() {
        let side = if d > e {
            1
        } else if d < e {
            -1
        } else {
            0
        };
        if t > 0 && side != 0 && side != last_side {
            signals[t] = if side > 0 { Signal::Buy } else { Signal::Sell };
        }
        if side != 0 {
            last_side = side;
        }
    }
    signals
}
