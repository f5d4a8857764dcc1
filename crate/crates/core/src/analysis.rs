//! Oscillation-range detection and price/MACD divergences.

use serde::Serialize;
use thiserror::Error;

use crate::indicators::IndicatorSeries;
use crate::ingest::PriceSeries;

/// Rolling-mean window for oscillation detection.
pub const OSCILLATION_WINDOW: usize = 10;
/// Half-width of the band around the rolling mean (±1.5%).
pub const OSCILLATION_BAND: f64 = 0.015;
/// An extreme must beat every close of this many preceding days.
pub const PROMINENCE_WINDOW: usize = 15;
/// Maximum distance, in trading days, to the extreme it is paired with.
pub const PAIRING_LOOKBACK: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {min} values, got {len}")]
    TooShort { len: usize, min: usize },
    #[error("price and indicator arrays differ in length ({prices} vs {indicators})")]
    Misaligned { prices: usize, indicators: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationMask {
    /// Trailing 10-day mean, `NaN` for the first nine days.
    pub mean10: Vec<f64>,
    pub inband: Vec<bool>,
    pub pairflag: Vec<bool>,
    pub mask: Vec<bool>,
}

/// Marks days that sit inside a sideways, low-range market.
///
/// Day `k` is in band when its close lies strictly within ±1.5% of the
/// mean of the ten closes ending at `k`. A pair of consecutive in-band days
/// `(k, k+1)` sets `pairflag[k]`, and the range it opens is marked from day
/// `k+1` onward for as long as new pairs keep forming, so the mask for a
/// day never depends on later prices.
pub fn detect_oscillation(prices: &PriceSeries) -> Result<OscillationMask, AnalysisError> {
    detect_oscillation_in(&prices.closes)
}

pub fn detect_oscillation_in(closes: &[f64]) -> Result<OscillationMask, AnalysisError> {
    let n = closes.len();
    if n < OSCILLATION_WINDOW {
        return Err(AnalysisError::TooShort {
            len: n,
            min: OSCILLATION_WINDOW,
        });
    }
    let mut mean10 = vec![f64::NAN; n];
    let mut inband = vec![false; n];
    for k in OSCILLATION_WINDOW - 1..n {
        let window = &closes[k + 1 - OSCILLATION_WINDOW..=k];
        let a = window.iter().sum::<f64>() / OSCILLATION_WINDOW as f64;
        mean10[k] = a;
        let p = closes[k];
        inband[k] = p > a * (1.0 - OSCILLATION_BAND) && p < a * (1.0 + OSCILLATION_BAND);
    }
    let mut pairflag = vec![false; n];
    for k in 0..n.saturating_sub(1) {
        pairflag[k] = inband[k] && inband[k + 1];
    }
    let mut mask = vec![false; n];
    mask[1..].copy_from_slice(&pairflag[..n - 1]);
    Ok(OscillationMask {
        mean10,
        inband,
        pairflag,
        mask,
    })
}

/// Strict interior local maxima and minima.
pub fn find_local_extrema(values: &[f64]) -> Result<(Vec<usize>, Vec<usize>), AnalysisError> {
    if values.len() < 3 {
        return Err(AnalysisError::TooShort {
            len: values.len(),
            min: 3,
        });
    }
    let mut peaks = Vec::new();
    let mut troughs = Vec::new();
    for (i, w) in values.windows(3).enumerate() {
        if w[1] > w[0] && w[1] > w[2] {
            peaks.push(i + 1);
        } else if w[1] < w[0] && w[1] < w[2] {
            troughs.push(i + 1);
        }
    }
    Ok((peaks, troughs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    /// Higher price high with a lower MACD high; predicts a decline.
    Top,
    /// Lower price low with a higher MACD low; predicts a rise.
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceEvent {
    pub kind: DivergenceKind,
    pub current_extreme_index: usize,
    pub previous_extreme_index: usize,
    /// `(previous, current)` closes.
    pub price_at_extremes: (f64, f64),
    /// `(previous, current)` histogram values.
    pub macd_at_extremes: (f64, f64),
}

impl DivergenceEvent {
    /// First day on which the extreme can be recognised (it needs the next close).
    pub fn confirmation_index(&self) -> usize {
        self.current_extreme_index + 1
    }

    /// Re-checks the defining inequalities from the stored values.
    pub fn is_consistent(&self) -> bool {
        let (p0, p1) = self.price_at_extremes;
        let (m0, m1) = self.macd_at_extremes;
        self.previous_extreme_index < self.current_extreme_index
            && match self.kind {
                DivergenceKind::Top => p1 > p0 && m1 < m0,
                DivergenceKind::Bottom => p1 < p0 && m1 > m0,
            }
    }
}

pub fn detect_divergences(prices: &PriceSeries, ind: &IndicatorSeries) -> Result<Vec<DivergenceEvent>, AnalysisError> {
    find_divergences(&prices.closes, ind.macd())
}

/// Divergences between closes and a MACD histogram.
///
/// A peak qualifies when it is a strict local maximum that also exceeds
/// every close of the previous 15 days. Each qualifying peak is paired with
/// the most recent earlier qualifying peak no more than 60 days back; a
/// higher price with a lower histogram value yields a top event. Troughs
/// are handled symmetrically.
pub fn find_divergences(closes: &[f64], macd: &[f64]) -> Result<Vec<DivergenceEvent>, AnalysisError> {
    let min = PROMINENCE_WINDOW + 2;
    if closes.len() != macd.len() {
        return Err(AnalysisError::Misaligned {
            prices: closes.len(),
            indicators: macd.len(),
        });
    }
    if closes.len() < min {
        return Err(AnalysisError::TooShort { len: closes.len(), min });
    }
    let (peaks, troughs) = find_local_extrema(closes)?;

    let prominent = |t: usize, higher: bool| {
        t >= PROMINENCE_WINDOW
            && closes[t - PROMINENCE_WINDOW..t]
                .iter()
                .all(|&p| if higher { closes[t] > p } else { closes[t] < p })
    };

    let mut events = Vec::new();
    for (kind, extremes) in [(DivergenceKind::Top, peaks), (DivergenceKind::Bottom, troughs)] {
        let higher = kind == DivergenceKind::Top;
        let mut previous: Option<usize> = None;
        for t in extremes.into_iter().filter(|&t| prominent(t, higher)) {
            if let Some(prev) = previous.filter(|&p| t - p <= PAIRING_LOOKBACK) {
                let event = DivergenceEvent {
                    kind,
                    current_extreme_index: t,
                    previous_extreme_index: prev,
                    price_at_extremes: (closes[prev], closes[t]),
                    macd_at_extremes: (macd[prev], macd[t]),
                };
                if event.is_consistent() {
                    events.push(event);
                }
            }
            previous = Some(t);
        }
    }
    events.sort_by_key(|e| (e.current_extreme_index, e.kind == DivergenceKind::Bottom));
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_oscillates_from_day_ten() {
        let m = detect_oscillation_in(&[100.0; 30]).unwrap();
        assert!(m.mask[..10].iter().all(|&b| !b));
        assert!(m.mask[10..].iter().all(|&b| b));
        assert!(m.mean10[..9].iter().all(|v| v.is_nan()));
        assert_eq!(m.mean10[9], 100.0);
    }

    #[test]
    fn steady_growth_never_oscillates() {
        let closes: Vec<f64> = (0..60).map(|i| 100.0 * 1.02f64.powi(i)).collect();
        let m = detect_oscillation_in(&closes).unwrap();
        assert!(m.mask.iter().all(|&b| !b));
        assert!(m.inband.iter().all(|&b| !b));
    }

    #[test]
    fn run_ends_when_band_breaks() {
        let mut closes = vec![100.0; 20];
        closes.extend([110.0, 120.0, 130.0]);
        let m = detect_oscillation_in(&closes).unwrap();
        assert!(m.mask[19]);
        assert!(!m.mask[21]);
        assert!(!m.mask[22]);
    }

    #[test]
    fn oscillation_needs_ten_days() {
        assert_eq!(
            detect_oscillation_in(&[1.0; 9]),
            Err(AnalysisError::TooShort { len: 9, min: 10 })
        );
    }

    #[test]
    fn local_extrema_by_definition() {
        assert_eq!(find_local_extrema(&[1.0, 3.0, 1.0]).unwrap(), (vec![1], vec![]));
        assert_eq!(find_local_extrema(&[3.0, 1.0, 3.0]).unwrap(), (vec![], vec![1]));
        assert_eq!(find_local_extrema(&[1.0, 2.0, 3.0, 4.0]).unwrap(), (vec![], vec![]));
        // plateaus are not strict extrema
        assert_eq!(find_local_extrema(&[1.0, 2.0, 2.0, 1.0]).unwrap(), (vec![], vec![]));
        assert!(find_local_extrema(&[1.0, 2.0]).is_err());
    }

    /// Flat 100 with spikes to `p1` on day 20 and `p2` on day 40.
    fn two_spikes(p1: f64, p2: f64) -> Vec<f64> {
        let mut c = vec![100.0; 50];
        c[20] = p1;
        c[40] = p2;
        c
    }

    #[test]
    fn top_divergence_pairs_peaks() {
        let closes = two_spikes(110.0, 115.0);
        let mut macd = vec![0.0; 50];
        macd[20] = 4.0;
        macd[40] = 3.0;
        let events = find_divergences(&closes, &macd).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert_eq!(e.kind, DivergenceKind::Top);
        assert_eq!((e.previous_extreme_index, e.current_extreme_index), (20, 40));
        assert_eq!(e.price_at_extremes, (110.0, 115.0));
        assert_eq!(e.macd_at_extremes, (4.0, 3.0));
        assert_eq!(e.confirmation_index(), 41);
    }

    #[test]
    fn confirming_macd_is_not_a_divergence() {
        let closes = two_spikes(110.0, 115.0);
        let mut macd = vec![0.0; 50];
        macd[20] = 3.0;
        macd[40] = 4.0;
        assert!(find_divergences(&closes, &macd).unwrap().is_empty());
    }

    #[test]
    fn bottom_divergence_pairs_troughs() {
        let closes = two_spikes(90.0, 85.0);
        let mut macd = vec![0.0; 50];
        macd[20] = -4.0;
        macd[40] = -3.0;
        let events = find_divergences(&closes, &macd).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, DivergenceKind::Bottom);
        assert_eq!(events[0].macd_at_extremes, (-4.0, -3.0));
    }

    #[test]
    fn peaks_too_far_apart_are_not_paired() {
        let mut closes = vec![100.0; 120];
        closes[20] = 110.0;
        closes[20 + PAIRING_LOOKBACK + 1] = 115.0;
        let mut macd = vec![0.0; 120];
        macd[20] = 4.0;
        macd[20 + PAIRING_LOOKBACK + 1] = 3.0;
        assert!(find_divergences(&closes, &macd).unwrap().is_empty());
    }

    #[test]
    fn peak_without_prominence_is_ignored() {
        // day 40 is a local max but day 30 is higher, inside its 15-day window
        let mut closes = two_spikes(110.0, 115.0);
        closes[30] = 120.0;
        let mut macd = vec![0.0; 50];
        macd[20] = 4.0;
        macd[40] = 3.0;
        let events = find_divergences(&closes, &macd).unwrap();
        assert!(events.iter().all(|e| e.current_extreme_index != 40));
    }

    #[test]
    fn divergence_preconditions() {
        assert!(matches!(
            find_divergences(&[1.0; 16], &[0.0; 16]),
            Err(AnalysisError::TooShort { min: 17, .. })
        ));
        assert!(matches!(
            find_divergences(&[1.0; 20], &[0.0; 19]),
            Err(AnalysisError::Misaligned { .. })
        ));
    }
}
