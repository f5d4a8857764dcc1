//! Periodized orthogonal discrete wavelet transform.
//!
//! One analysis step maps a signal `x` of even length `N` onto
//!
//! ```text
//! approx[t] = Σ_k h[k] · x[(2t + 1 − k) mod N]
//! detail[t] = Σ_k g[k] · x[(2t + 1 − k) mod N]
//! ```
//!
//! for `t < N/2`. With an orthonormal filter pair the step is an orthogonal
//! map, so synthesis is its transpose and energy is preserved.

use thiserror::Error;

/// Levels used by [`denoise_dif`].
pub const DENOISE_LEVELS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum WaveletError {
    #[error("signal length {0} must be even and at least 2")]
    InvalidLength(usize),
    #[error("decomposition needs at least one level")]
    InvalidLevels,
    #[error("signal length {len} is not divisible by 2^{levels}")]
    NotDivisible { len: usize, levels: usize },
    #[error("signal of length {len} is shorter than the {min} samples needed")]
    TooShort { len: usize, min: usize },
    #[error("decomposition was produced by a {expected}-tap filter, got {actual} taps")]
    FilterMismatch { expected: usize, actual: usize },
    #[error("decomposition is internally inconsistent: {0}")]
    Malformed(&'static str),
}

/// Orthogonal lowpass/highpass analysis pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl WaveletFilter {
    /// Builds the quadrature-mirror highpass `g[k] = (−1)^k · h[L−1−k]`.
    pub fn from_lowpass(lowpass: Vec<f64>) -> Self {
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|k| {
                let v = lowpass[len - 1 - k];
                if k % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect();
        Self { lowpass, highpass }
    }

    pub fn haar() -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_lowpass(vec![c, c])
    }

    pub fn coif5() -> Self {
        Self::from_lowpass(COIF5_LOWPASS.to_vec())
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }
}

/// Coiflet-5 decomposition lowpass filter (30 taps).
#[allow(clippy::excessive_precision)]
const COIF5_LOWPASS: [f64; 30] = [
    -9.604010112767894e-08,
    -1.6237995172048338e-07,
    2.0612203985788783e-06,
    3.7007277113394796e-06,
    -2.1270221672515614e-05,
    -4.12198619242655e-05,
    0.00014035632812373243,
    0.0003018579416682448,
    -0.0006375589261258812,
    -0.0016616273039298788,
    0.0024315754425382886,
    0.006761520220620417,
    -0.009159507338676163,
    -0.019758391600965465,
    0.032674799467057355,
    0.041287530472117834,
    -0.10556315130733723,
    -0.06203775157498196,
    0.4379823066591634,
    0.7742936228603274,
    0.42157126673075435,
    -0.052046670253554764,
    -0.09192158806008609,
    0.028169744270532353,
    0.023408322118927783,
    -0.010131584846900276,
    -0.00415931262757864,
    0.0021782943778456947,
    0.0003585777411617577,
    -0.000212081862067494,
];

pub fn coif5_filters() -> WaveletFilter {
    WaveletFilter::coif5()
}

/// Multilevel decomposition: `details[j]` holds level `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
    pub original_length: usize,
    pub levels: usize,
    pub filter_len: usize,
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

pub fn dwt_step(signal: &[f64], filter: &WaveletFilter) -> Result<(Vec<f64>, Vec<f64>), WaveletError> {
    let n = signal.len();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(WaveletError::InvalidLength(n));
    }
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for t in 0..half {
        let base = 2 * t as isize + 1;
        let (mut a, mut d) = (0.0, 0.0);
        for (k, (h, g)) in filter.lowpass.iter().zip(&filter.highpass).enumerate() {
            let x = signal[wrap(base - k as isize, n)];
            a += h * x;
            d += g * x;
        }
        approx[t] = a;
        detail[t] = d;
    }
    Ok((approx, detail))
}

/// Inverse of [`dwt_step`]; `approx` and `detail` must have equal length.
pub fn idwt_step(approx: &[f64], detail: &[f64], filter: &WaveletFilter) -> Result<Vec<f64>, WaveletError> {
    if approx.len() != detail.len() || approx.is_empty() {
        return Err(WaveletError::Malformed("approximation and detail lengths differ"));
    }
    let n = 2 * approx.len();
    let mut out = vec![0.0; n];
    for (t, (a, d)) in approx.iter().zip(detail).enumerate() {
        let base = 2 * t as isize + 1;
        for (k, (h, g)) in filter.lowpass.iter().zip(&filter.highpass).enumerate() {
            out[wrap(base - k as isize, n)] += h * a + g * d;
        }
    }
    Ok(out)
}

pub fn decompose(signal: &[f64], filter: &WaveletFilter, levels: usize) -> Result<Decomposition, WaveletError> {
    if levels < 1 {
        return Err(WaveletError::InvalidLevels);
    }
    let len = signal.len();
    if len == 0 || levels >= usize::BITS as usize || !len.is_multiple_of(1usize << levels) {
        return Err(WaveletError::NotDivisible { len, levels });
    }
    let mut details = Vec::with_capacity(levels);
    let mut approx = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&approx, filter)?;
        details.push(d);
        approx = a;
    }
    Ok(Decomposition {
        details,
        approx,
        original_length: len,
        levels,
        filter_len: filter.len(),
    })
}

fn check(decomp: &Decomposition, filter: &WaveletFilter) -> Result<(), WaveletError> {
    if decomp.filter_len != filter.len() {
        return Err(WaveletError::FilterMismatch {
            expected: decomp.filter_len,
            actual: filter.len(),
        });
    }
    if decomp.details.len() != decomp.levels {
        return Err(WaveletError::Malformed("detail count differs from level count"));
    }
    let mut expected = decomp.approx.len();
    for d in decomp.details.iter().rev() {
        if d.len() != expected {
            return Err(WaveletError::Malformed("detail lengths do not halve per level"));
        }
        expected *= 2;
    }
    if expected < decomp.original_length {
        return Err(WaveletError::Malformed("original length exceeds reconstructed length"));
    }
    Ok(())
}

fn inverse(decomp: &Decomposition, filter: &WaveletFilter, keep_details: bool) -> Result<Vec<f64>, WaveletError> {
    check(decomp, filter)?;
    let mut signal = decomp.approx.clone();
    for d in decomp.details.iter().rev() {
        signal = if keep_details {
            idwt_step(&signal, d, filter)?
        } else {
            idwt_step(&signal, &vec![0.0; d.len()], filter)?
        };
    }
    signal.truncate(decomp.original_length);
    Ok(signal)
}

/// Full inverse transform.
pub fn reconstruct(decomp: &Decomposition, filter: &WaveletFilter) -> Result<Vec<f64>, WaveletError> {
    inverse(decomp, filter, true)
}

/// Inverse transform with every detail level zeroed.
pub fn reconstruct_approx(decomp: &Decomposition, filter: &WaveletFilter) -> Result<Vec<f64>, WaveletError> {
    inverse(decomp, filter, false)
}

/// Smooths a DIF curve by keeping only the level-4 coif5 approximation.
///
/// The input is padded to a multiple of 16 by repeating its last value and
/// the result is trimmed back to the input length. The whole series is
/// transformed at once, so every output sample depends on future inputs.
pub fn denoise_dif(dif: &[f64]) -> Result<Vec<f64>, WaveletError> {
    let block = 1usize << DENOISE_LEVELS;
    if dif.len() < block {
        return Err(WaveletError::TooShort {
            len: dif.len(),
            min: block,
        });
    }
    let filter = WaveletFilter::coif5();
    let padded_len = dif.len().div_ceil(block) * block;
    let mut padded = dif.to_vec();
    padded.resize(padded_len, dif[dif.len() - 1]);
    let decomp = decompose(&padded, &filter, DENOISE_LEVELS)?;
    let mut smooth = reconstruct_approx(&decomp, &filter)?;
    smooth.truncate(dif.len());
    Ok(smooth)
}
