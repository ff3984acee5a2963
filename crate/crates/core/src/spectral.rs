//! Magnitude spectra of fixation segments and empirical filter identification.
//!
//! A device's binocular channel is modelled as the version signal passed through
//! an unknown linear filter, `Y(f) = X(f)·H(f)`. Dividing the spectra of paired
//! segments and inverting gives an impulse-response estimate per pair; averaging
//! those and evaluating the response on a dense grid yields the −3 dB point.

use std::collections::BTreeMap;

pub use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statkit;
use crate::types::{Dimension, Eye, GazeChannel, GazeSample, TargetStep};

/// Samples per analysed segment.
pub const SEGMENT_LEN: usize = 256;
/// Zero-padded length used to evaluate a filter's frequency response.
pub const RESPONSE_FFT_LEN: usize = 1024;
/// Bins of `X(f)` smaller than this fraction of the largest bin are not divided.
pub const DIVISION_EPSILON: f64 = 1e-8;

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        Err(Error::NotPowerOfTwo(n))
    } else {
        Ok(())
    }
}

/// In-place forward DFT, `X[k] = Σ x[n]·e^{−2πikn/N}`. Length must be a power of two.
pub fn fft(buf: &mut [Complex64]) -> Result<()> {
    check_pow2(buf.len())?;
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
    Ok(())
}

/// In-place inverse DFT including the `1/N` normalization.
pub fn ifft(buf: &mut [Complex64]) -> Result<()> {
    check_pow2(buf.len())?;
    let n = buf.len() as f64;
    FftPlanner::new().plan_fft_inverse(buf.len()).process(buf);
    for v in buf.iter_mut() {
        *v /= n;
    }
    Ok(())
}

fn real_fft(x: &[f64]) -> Result<Vec<Complex64>> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&mut buf)?;
    Ok(buf)
}

/// Symmetric Hann window, `w[n] = 0.5·(1 − cos(2πn/(N−1)))`.
pub fn hann_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / denom).cos()))
        .collect()
}

/// Removes the least-squares quadratic trend (which includes the mean).
pub fn detrend_quadratic(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot be detrended"
        )));
    }
    // Abscissa scaled to [-1, 1] keeps the design well conditioned.
    let half = (n - 1) as f64 / 2.0;
    let t: Vec<f64> = (0..n).map(|i| (i as f64 - half) / half).collect();
    let t2: Vec<f64> = t.iter().map(|v| v * v).collect();
    let fit = statkit::ols(x, &[vec![1.0; n], t, t2])?;
    Ok(fit.residuals)
}

fn check_segment(x: &[f64]) -> Result<()> {
    if x.len() != SEGMENT_LEN {
        return Err(Error::WrongLength {
            expected: SEGMENT_LEN,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSamples);
    }
    Ok(())
}

/// Detrends a 256-sample position sequence and applies a Hann window.
///
/// Non-finite values mark invalid samples and are rejected.
pub fn prepare_segment(x: &[f64]) -> Result<Vec<f64>> {
    check_segment(x)?;
    let detrended = detrend_quadratic(x)?;
    Ok(detrended
        .iter()
        .zip(hann_window(x.len()))
        .map(|(v, w)| v * w)
        .collect())
}

fn mean_centered(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

/// Single-sided magnitude spectrum of a power-of-two length signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// `|X[k]|·2/N` for interior bins, `|X[k]|/N` at DC and Nyquist.
pub fn magnitude_spectrum(x: &[f64], rate_hz: f64) -> Result<Spectrum> {
    let spec = real_fft(x)?;
    let n = x.len();
    let half = n / 2;
    let nf = n as f64;
    let magnitude = (0..=half)
        .map(|k| {
            let scale = if k == 0 || k == half { 1.0 } else { 2.0 };
            spec[k].norm() * scale / nf
        })
        .collect();
    let freq_hz = (0..=half).map(|k| k as f64 * rate_hz / nf).collect();
    Ok(Spectrum { freq_hz, magnitude })
}

/// Per-frame mean of two eyes; a frame is valid only when both eyes are.
pub fn version_signal(left: &GazeChannel, right: &GazeChannel) -> Result<GazeChannel> {
    if left.len() != right.len() {
        return Err(Error::TimestampMismatch);
    }
    let samples = left
        .samples()
        .iter()
        .zip(right.samples())
        .map(|(l, r)| {
            if l.timestamp_ms != r.timestamp_ms {
                return Err(Error::TimestampMismatch);
            }
            Ok(if l.valid && r.valid {
                GazeSample::new(
                    l.timestamp_ms,
                    0.5 * (l.x_deg + r.x_deg),
                    0.5 * (l.y_deg + r.y_deg),
                )
            } else {
                GazeSample::invalid(l.timestamp_ms)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GazeChannel::from_trusted(Eye::Version, samples))
}

/// Magnitude spectra averaged over segments, one curve per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet {
    pub freq_hz: Vec<f64>,
    pub magnitude: BTreeMap<Eye, Vec<f64>>,
    pub n_segments: usize,
}

impl SpectrumSet {
    /// Averages prepared spectra of every segment for each channel.
    ///
    /// Each channel must supply the same number of raw 256-sample segments.
    pub fn from_segments(segments: &BTreeMap<Eye, Vec<Vec<f64>>>, rate_hz: f64) -> Result<Self> {
        let mut magnitude = BTreeMap::new();
        let mut freq_hz = Vec::new();
        let mut n_segments = None;
        for (&eye, segs) in segments {
            if segs.is_empty() {
                return Err(Error::InsufficientData(format!("no segments for `{eye}`")));
            }
            if *n_segments.get_or_insert(segs.len()) != segs.len() {
                return Err(Error::InsufficientData(
                    "channels contribute different segment counts".into(),
                ));
            }
            let mut acc = vec![0.0; SEGMENT_LEN / 2 + 1];
            for seg in segs {
                let s = magnitude_spectrum(&prepare_segment(seg)?, rate_hz)?;
                for (a, m) in acc.iter_mut().zip(&s.magnitude) {
                    *a += m;
                }
                freq_hz = s.freq_hz;
            }
            let n = segs.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            magnitude.insert(eye, acc);
        }
        Ok(Self {
            freq_hz,
            magnitude,
            n_segments: n_segments.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterOptions {
    /// Hann-window both mean-centred signals before dividing. Without it the
    /// discontinuity at the segment edges leaks into every bin of the ratio.
    pub window: bool,
    /// Zero bins where `|X|` is tiny instead of dividing.
    pub regularize: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            window: true,
            regularize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEstimate {
    /// Average of the per-pair impulse responses, circularly ordered: lag `k`
    /// at index `k`, negative lags wrapped to the end.
    pub impulse: Vec<f64>,
    pub freq_hz: Vec<f64>,
    pub response_db: Vec<f64>,
    pub minus3db_hz: f64,
    /// True when the response never fell 3 dB below DC; `minus3db_hz` is then Nyquist.
    pub minus3db_is_nyquist: bool,
    pub n_pairs: usize,
}

fn impulse_estimate(x: &[f64], y: &[f64], opts: FilterOptions) -> Result<Vec<f64>> {
    check_segment(x)?;
    check_segment(y)?;
    let (mut xp, mut yp) = (mean_centered(x), mean_centered(y));
    if opts.window {
        let w = hann_window(SEGMENT_LEN);
        for ((a, b), w) in xp.iter_mut().zip(yp.iter_mut()).zip(&w) {
            *a *= w;
            *b *= w;
        }
    }
    let xs = real_fft(&xp)?;
    let ys = real_fft(&yp)?;
    let max = xs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut h: Vec<Complex64> = Vec::with_capacity(xs.len());
    for (k, (xk, yk)) in xs.iter().zip(&ys).enumerate() {
        let mag = xk.norm();
        if opts.regularize {
            if mag < DIVISION_EPSILON * max || mag == 0.0 {
                h.push(Complex64::new(0.0, 0.0));
                continue;
            }
        } else if mag == 0.0 {
            return Err(Error::SpectralDivideByZero(k));
        }
        h.push(yk / xk);
    }
    // Mean-centering removes what the DC bin would say about the filter. A real
    // filter has a real, continuous response there, so the first harmonic
    // stands in for it.
    if xs[1].norm() >= DIVISION_EPSILON * max
        && (opts.window || xs[0].norm() < DIVISION_EPSILON * max)
    {
        h[0] = Complex64::new(h[1].re, 0.0);
    }
    ifft(&mut h)?;
    Ok(h.iter().map(|c| c.re).collect())
}

/// Magnitude response of an FIR filter in dB on `n_fft/2 + 1` frequencies.
pub fn frequency_response(
    impulse: &[f64],
    rate_hz: f64,
    n_fft: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_pow2(n_fft)?;
    if impulse.len() > n_fft {
        return Err(Error::WrongLength {
            expected: n_fft,
            got: impulse.len(),
        });
    }
    let mut padded = impulse.to_vec();
    padded.resize(n_fft, 0.0);
    let spec = real_fft(&padded)?;
    let half = n_fft / 2;
    let freq = (0..=half)
        .map(|k| k as f64 * rate_hz / n_fft as f64)
        .collect();
    let db = (0..=half).map(|k| 20.0 * spec[k].norm().log10()).collect();
    Ok((freq, db))
}

/// First frequency where the response is 3 dB below its DC value, linearly
/// interpolated in dB between grid points. `None` if it never gets there.
pub fn minus3db_point(freq_hz: &[f64], response_db: &[f64]) -> Option<f64> {
    let reference = *response_db.first()?;
    let level = reference - 3.0;
    for k in 1..response_db.len() {
        if response_db[k] <= level {
            let (d0, d1) = (response_db[k - 1], response_db[k]);
            let frac = if d0 == d1 {
                0.0
            } else {
                (d0 - level) / (d0 - d1)
            };
            return Some(freq_hz[k - 1] + frac * (freq_hz[k] - freq_hz[k - 1]));
        }
    }
    None
}

/// Estimates the filter mapping each `x` segment (version) onto its paired `y`
/// segment (binocular).
pub fn estimate_filter(
    pairs: &[(Vec<f64>, Vec<f64>)],
    rate_hz: f64,
    opts: FilterOptions,
) -> Result<FilterEstimate> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "filter estimation needs at least one segment pair".into(),
        ));
    }
    let mut impulse = vec![0.0; SEGMENT_LEN];
    for (x, y) in pairs {
        for (acc, v) in impulse.iter_mut().zip(impulse_estimate(x, y, opts)?) {
            *acc += v;
        }
    }
    let n = pairs.len() as f64;
    impulse.iter_mut().for_each(|v| *v /= n);
    // Centre lag zero so negative lags stay adjacent when zero-padding.
    let mut centred = impulse.clone();
    centred.rotate_right(SEGMENT_LEN / 2);
    let (freq_hz, response_db) = frequency_response(&centred, rate_hz, RESPONSE_FFT_LEN)?;
    let found = minus3db_point(&freq_hz, &response_db);
    Ok(FilterEstimate {
        impulse,
        minus3db_hz: found.unwrap_or(rate_hz / 2.0),
        minus3db_is_nyquist: found.is_none(),
        freq_hz,
        response_db,
        n_pairs: pairs.len(),
    })
}

/// Copies `SEGMENT_LEN` positions starting at `start`; invalid samples become NaN.
pub fn extract_segment(channel: &GazeChannel, start: usize, dim: Dimension) -> Result<Vec<f64>> {
    let samples = channel
        .samples()
        .get(start..start + SEGMENT_LEN)
        .ok_or(Error::WrongLength {
            expected: SEGMENT_LEN,
            got: channel.len().saturating_sub(start),
        })?;
    Ok(samples
        .iter()
        .map(|s| if s.valid { dim.of(s) } else { f64::NAN })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentChoice {
    pub step: usize,
    pub start: usize,
    /// `√(MAD_H² + MAD_V²)` of the reference channel over the stretch.
    pub dispersion: f64,
}

/// Picks the `count` quietest 256-sample fixation stretches.
///
/// Channels must be latency-aligned. Each target step offers one candidate
/// starting `settle_ms` after its onset; it must end `settle_ms` before the next
/// onset, since alignment centres each saccade on the onset, and be valid in
/// every channel. Candidates are ranked on the reference channel,
/// ties going to the earlier step.
pub fn select_segments(
    reference: &GazeChannel,
    others: &[&GazeChannel],
    target: &[TargetStep],
    settle_ms: f64,
    count: usize,
) -> Vec<SegmentChoice> {
    let samples = reference.samples();
    let mut candidates = Vec::new();
    for (k, step) in target.iter().enumerate() {
        let begin = step.onset_ms + settle_ms;
        let end = target
            .get(k + 1)
            .map_or(f64::INFINITY, |s| s.onset_ms - settle_ms);
        let start = samples.partition_point(|s| s.timestamp_ms < begin);
        let Some(window) = samples.get(start..start + SEGMENT_LEN) else {
            continue;
        };
        if window.last().is_none_or(|s| s.timestamp_ms >= end) {
            continue;
        }
        let all_valid = window.iter().all(|s| s.valid)
            && others.iter().all(|c| {
                c.samples()
                    .get(start..start + SEGMENT_LEN)
                    .is_some_and(|w| w.iter().all(|s| s.valid))
            });
        if !all_valid {
            continue;
        }
        let xs: Vec<f64> = window.iter().map(|s| s.x_deg).collect();
        let ys: Vec<f64> = window.iter().map(|s| s.y_deg).collect();
        let dispersion = statkit::mad(&xs).unwrap().hypot(statkit::mad(&ys).unwrap());
        candidates.push(SegmentChoice {
            step: k,
            start,
            dispersion,
        });
    }
    candidates.sort_by(|a, b| {
        a.dispersion
            .total_cmp(&b.dispersion)
            .then(a.step.cmp(&b.step))
    });
    candidates.truncate(count);
    candidates
}
