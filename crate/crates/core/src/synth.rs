//! Random-saccade recordings with known ground truth.
//!
//! A recording consists of an optional 13-point calibration prefix followed by
//! randomly placed task targets. Each eye looks at its own view of the target
//! after a fixed latency, moving between targets with a raised-cosine position
//! profile. Distortions are applied in a fixed order: bias polynomial,
//! crosstalk, additive noise, glitch outliers, then invalid samples. The
//! binocular channel is either distorted independently or derived by passing
//! the version signal through a causal FIR filter.
//!
//! Every random draw comes from one `ChaCha8Rng` stream seeded with
//! `seed_from_u64(seed)`, consumed in a fixed order, so a seed fully determines
//! the output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::correct_target_for_eye;
use crate::ingest::{save_recording, TimestampUnit};
use crate::metrics::{AccuracyResult, CrosstalkCoefficients};
use crate::preprocess::WindowSpec;
use crate::spectral;
use crate::statkit;
use crate::types::{
    Device, Dimension, Eye, GazeChannel, GazeRecording, GazeSample, TargetBounds, TargetStep,
};

/// Normal quantile at 0.75: the MAD of a unit normal.
pub const NORMAL_MAD: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    #[default]
    Laplace,
    Gaussian,
}

/// Which way the bias polynomial maps positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BiasDirection {
    /// `measured = P(true)`.
    #[default]
    Forward,
    /// `true = P(measured)`: the measured position is solved for, so the
    /// distortion is exactly undone by a quadratic recalibration.
    Inverse,
}

/// Quadratic position map per axis with terms `[x², y², x, y, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bias {
    pub direction: BiasDirection,
    pub x: [f64; 5],
    pub y: [f64; 5],
}

impl Default for Bias {
    fn default() -> Self {
        Self {
            direction: BiasDirection::Forward,
            x: [0.0, 0.0, 1.0, 0.0, 0.0],
            y: [0.0, 0.0, 0.0, 1.0, 0.0],
        }
    }
}

impl Bias {
    /// Constant offset.
    pub fn offset(dx: f64, dy: f64) -> Self {
        let mut b = Self::default();
        b.x[4] = dx;
        b.y[4] = dy;
        b
    }

    /// Affine map `x' = ax·x + bx·y + cx`, `y' = ay·x + by·y + cy`.
    pub fn affine(x: [f64; 3], y: [f64; 3]) -> Self {
        Self {
            direction: BiasDirection::Forward,
            x: [0.0, 0.0, x[0], x[1], x[2]],
            y: [0.0, 0.0, y[0], y[1], y[2]],
        }
    }

    fn poly(c: &[f64; 5], x: f64, y: f64) -> f64 {
        c[0] * x * x + c[1] * y * y + c[2] * x + c[3] * y + c[4]
    }

    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        (Self::poly(&self.x, x, y), Self::poly(&self.y, x, y))
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default() || (self.x == Self::default().x && self.y == Self::default().y)
    }

    /// Measured position for a true position.
    pub fn distort(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        match self.direction {
            BiasDirection::Forward => Ok(self.eval(x, y)),
            BiasDirection::Inverse => self.solve(x, y),
        }
    }

    /// Newton iteration for `P(m) = (x, y)`.
    fn solve(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let (mut mx, mut my) = (x, y);
        for _ in 0..100 {
            let (px, py) = self.eval(mx, my);
            let (fx, fy) = (px - x, py - y);
            if fx.abs().max(fy.abs()) < 1e-14 {
                return Ok((mx, my));
            }
            let j11 = 2.0 * self.x[0] * mx + self.x[2];
            let j12 = 2.0 * self.x[1] * my + self.x[3];
            let j21 = 2.0 * self.y[0] * mx + self.y[2];
            let j22 = 2.0 * self.y[1] * my + self.y[3];
            let det = j11 * j22 - j12 * j21;
            if det.abs() < 1e-12 {
                break;
            }
            mx -= (j22 * fx - j12 * fy) / det;
            my -= (-j21 * fx + j11 * fy) / det;
        }
        let (px, py) = self.eval(mx, my);
        if (px - x).abs().max((py - y).abs()) < 1e-10 {
            Ok((mx, my))
        } else {
            Err(Error::ConfigInvalid(format!(
                "inverse bias has no solution near ({x}, {y})"
            )))
        }
    }
}

/// Offsets added along one axis as a function of the orthogonal true position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Crosstalk {
    /// Horizontal offset per degree of vertical position.
    pub h_linear: f64,
    pub h_quadratic: f64,
    /// Vertical offset per degree of horizontal position.
    pub v_linear: f64,
    pub v_quadratic: f64,
}

/// Distortions applied to one stored channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelDistortion {
    /// Population median absolute deviation of the per-axis noise.
    pub noise_mad_deg: f64,
    pub noise: NoiseLaw,
    pub bias: Bias,
    pub crosstalk: Crosstalk,
    /// Fraction of samples displaced by 3°–6° in a random direction.
    pub outlier_rate: f64,
    /// Fraction of samples marked invalid.
    pub invalid_rate: f64,
}

/// Filter applied to the version signal to make the binocular channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinocularFilter {
    /// Explicit FIR taps, applied causally.
    Taps(Vec<f64>),
    /// Equal-weight moving average of this many samples.
    MovingAverage(usize),
    /// Hamming-windowed sinc low-pass whose −3 dB point is `cutoff_hz`.
    LowPass { cutoff_hz: f64, taps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub subject_id: String,
    pub device: Device,
    pub rate_hz: f64,
    pub n_saccades: usize,
    pub bounds: TargetBounds,
    pub min_step_deg: f64,
    pub fixation_min_ms: f64,
    pub fixation_max_ms: f64,
    pub lead_in_ms: f64,
    pub latency_ms: f64,
    pub saccade_ms: f64,
    pub isi_jitter_sd_ms: f64,
    /// Fraction of frames silently missing from the stream.
    pub drop_rate: f64,
    pub calibration_prefix: bool,
    pub ipd_mm: f64,
    pub depth_mm: f64,
    pub channels: Vec<Eye>,
    pub left: ChannelDistortion,
    pub right: ChannelDistortion,
    pub binocular: ChannelDistortion,
    pub binocular_filter: Option<BinocularFilter>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            subject_id: "synth01".into(),
            device: Device::Synthetic,
            rate_hz: 250.0,
            n_saccades: 30,
            bounds: TargetBounds::default(),
            min_step_deg: 3.0,
            fixation_min_ms: 1000.0,
            fixation_max_ms: 1500.0,
            lead_in_ms: 500.0,
            latency_ms: 192.0,
            saccade_ms: 40.0,
            isi_jitter_sd_ms: 0.071,
            drop_rate: 0.0,
            calibration_prefix: true,
            ipd_mm: crate::types::DEFAULT_IPD_MM,
            depth_mm: crate::types::DEFAULT_DEPTH_MM,
            channels: vec![Eye::Left, Eye::Right, Eye::Binocular],
            left: ChannelDistortion::default(),
            right: ChannelDistortion::default(),
            binocular: ChannelDistortion::default(),
            binocular_filter: None,
        }
    }
}

/// The 13-point calibration grid: a 3×3 grid over the full range plus four
/// inner points.
pub fn calibration_grid(bounds: TargetBounds) -> Vec<(f64, f64)> {
    let (x, y) = (bounds.max_abs_x_deg, bounds.max_abs_y_deg);
    let mut g = Vec::with_capacity(13);
    for &gy in &[y, 0.0, -y] {
        for &gx in &[-x, 0.0, x] {
            g.push((gx, gy));
        }
    }
    for &(sx, sy) in &[(-0.5, 0.5), (0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)] {
        g.push((sx * x, sy * y));
    }
    g
}

impl SynthConfig {
    pub fn distortion(&self, eye: Eye) -> &ChannelDistortion {
        match eye {
            Eye::Left => &self.left,
            Eye::Right => &self.right,
            _ => &self.binocular,
        }
    }

    pub fn sample_period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }

    /// Latency as a whole number of sample periods.
    pub fn latency_samples(&self) -> usize {
        (self.latency_ms / self.sample_period_ms()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return bad("rate_hz must be positive");
        }
        if !(self.bounds.max_abs_x_deg > 0.0 && self.bounds.max_abs_y_deg > 0.0) {
            return bad("target ranges must be positive");
        }
        if !(self.bounds.max_abs_x_deg < 90.0 && self.bounds.max_abs_y_deg < 90.0) {
            return bad("target ranges must be below 90 degrees");
        }
        if self.n_saccades == 0 && !self.calibration_prefix {
            return bad("at least one target step is required");
        }
        if !(self.min_step_deg >= 0.0)
            || self.min_step_deg >= self.bounds.max_abs_x_deg.hypot(self.bounds.max_abs_y_deg)
        {
            return bad("min_step_deg must be non-negative and smaller than the target range");
        }
        if !(self.fixation_min_ms > 0.0 && self.fixation_min_ms <= self.fixation_max_ms) {
            return bad("fixation durations must satisfy 0 < min <= max");
        }
        if !(self.lead_in_ms >= 0.0 && self.latency_ms >= 0.0) {
            return bad("lead-in and latency must be non-negative");
        }
        if !(self.saccade_ms >= 0.0 && self.saccade_ms < self.fixation_min_ms) {
            return bad("saccade_ms must be non-negative and shorter than a fixation");
        }
        if !(self.isi_jitter_sd_ms >= 0.0 && self.isi_jitter_sd_ms < self.sample_period_ms() / 8.0)
        {
            return bad(
                "isi_jitter_sd_ms must be non-negative and small against the sample period",
            );
        }
        if !(0.0..0.5).contains(&self.drop_rate) {
            return bad("drop_rate must lie in [0, 0.5)");
        }
        if !(self.ipd_mm >= 0.0 && self.depth_mm > 0.0) {
            return bad("ipd must be non-negative and depth positive");
        }
        if self.channels.is_empty() || self.channels.contains(&Eye::Version) {
            return bad("channels must be a non-empty subset of left, right, binocular");
        }
        for eye in [Eye::Left, Eye::Right, Eye::Binocular] {
            let d = self.distortion(eye);
            if !(d.noise_mad_deg >= 0.0) {
                return bad("noise_mad_deg must be non-negative");
            }
            if !(0.0..0.5).contains(&d.outlier_rate) || !(0.0..0.5).contains(&d.invalid_rate) {
                return bad("outlier and invalid rates must lie in [0, 0.5)");
            }
        }
        if let Some(f) = &self.binocular_filter {
            if !(self.channels.contains(&Eye::Left) && self.channels.contains(&Eye::Right)) {
                return bad("a binocular filter needs both eyes to form the version signal");
            }
            match f {
                BinocularFilter::Taps(t) if t.is_empty() || t.iter().any(|v| !v.is_finite()) => {
                    return bad("filter taps must be finite and non-empty")
                }
                BinocularFilter::MovingAverage(0) => {
                    return bad("moving average needs at least one tap")
                }
                BinocularFilter::LowPass { cutoff_hz, taps }
                    if !(*cutoff_hz > 0.0 && *cutoff_hz < self.rate_hz / 4.0) || *taps < 3 =>
                {
                    return bad("low-pass cutoff must lie in (0, rate/4) with at least 3 taps");
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Hamming-windowed sinc low-pass with unit DC gain whose −3 dB point is
/// `cutoff_hz`; the sinc corner is tuned by bisection on the realised response.
pub fn design_lowpass(cutoff_hz: f64, taps: usize, rate_hz: f64) -> Result<Vec<f64>> {
    let build = |fc: f64| -> Vec<f64> {
        let m = (taps - 1) as f64;
        let mut h: Vec<f64> = (0..taps)
            .map(|n| {
                let k = n as f64 - m / 2.0;
                let sinc = if k == 0.0 {
                    2.0 * fc / rate_hz
                } else {
                    (2.0 * std::f64::consts::PI * fc * k / rate_hz).sin()
                        / (std::f64::consts::PI * k)
                };
                let w = if taps == 1 {
                    1.0
                } else {
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / m).cos()
                };
                sinc * w
            })
            .collect();
        let dc: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= dc);
        h
    };
    let realised = |fc: f64| -> Result<Option<f64>> {
        let (f, db) = spectral::frequency_response(&build(fc), rate_hz, 8192)?;
        Ok(spectral::minus3db_point(&f, &db))
    };
    let (mut lo, mut hi) = (cutoff_hz * 0.25, (cutoff_hz * 4.0).min(rate_hz * 0.45));
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        match realised(mid)? {
            Some(f3) if f3 < cutoff_hz => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(build(0.5 * (lo + hi)))
}

impl BinocularFilter {
    pub fn taps(&self, rate_hz: f64) -> Result<Vec<f64>> {
        match self {
            BinocularFilter::Taps(t) => Ok(t.clone()),
            BinocularFilter::MovingAverage(n) => Ok(vec![1.0 / *n as f64; *n]),
            BinocularFilter::LowPass { cutoff_hz, taps } => {
                design_lowpass(*cutoff_hz, *taps, rate_hz)
            }
        }
    }
}

/// Causal FIR filtering; samples before the start repeat the first value.
pub fn fir_filter(taps: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .map(|(k, h)| h * x[n.saturating_sub(k)])
                .sum()
        })
        .collect()
}

/// What the generator put into one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTruth {
    pub distortion: ChannelDistortion,
    /// Indices (in the stored recording) of displaced samples.
    pub outlier_indices: Vec<usize>,
    pub invalid_indices: Vec<usize>,
    /// True when the channel is the filtered version signal.
    pub filtered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub latency_samples: usize,
    pub calibration_steps: usize,
    pub target: Vec<TargetStep>,
    pub channels: BTreeMap<Eye, ChannelTruth>,
    pub filter_taps: Option<Vec<f64>>,
    /// Frames removed from the nominal clock, as nominal frame numbers.
    pub dropped_frames: Vec<usize>,
}

fn laplace(rng: &mut ChaCha8Rng, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn noise(rng: &mut ChaCha8Rng, law: NoiseLaw, mad: f64) -> f64 {
    if mad == 0.0 {
        return 0.0;
    }
    match law {
        NoiseLaw::Laplace => laplace(rng, mad / std::f64::consts::LN_2),
        NoiseLaw::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            z * mad / NORMAL_MAD
        }
    }
}

fn targets(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<TargetStep> {
    let dt = cfg.sample_period_ms();
    let mut positions = Vec::new();
    if cfg.calibration_prefix {
        let mut grid = calibration_grid(cfg.bounds);
        for i in (1..grid.len()).rev() {
            let j = rng.random_range(0..=i);
            grid.swap(i, j);
        }
        positions.extend(grid);
    }
    let (bx, by) = (cfg.bounds.max_abs_x_deg, cfg.bounds.max_abs_y_deg);
    for _ in 0..cfg.n_saccades {
        let prev = positions.last().copied().unwrap_or((0.0, 0.0));
        loop {
            let p = (rng.random_range(-bx..=bx), rng.random_range(-by..=by));
            if (p.0 - prev.0).hypot(p.1 - prev.1) >= cfg.min_step_deg {
                positions.push(p);
                break;
            }
        }
    }
    // Onsets sit half-way between nominal frames so no sample lands on one.
    let mut onset = ((cfg.lead_in_ms / dt).round() + 0.5) * dt;
    positions
        .into_iter()
        .map(|(x, y)| {
            let step = TargetStep {
                onset_ms: onset,
                x_deg: x,
                y_deg: y,
                depth_mm: cfg.depth_mm,
            };
            let dur = rng.random_range(cfg.fixation_min_ms..=cfg.fixation_max_ms);
            onset += (dur / dt).round().max(1.0) * dt;
            step
        })
        .collect()
}

/// Raised-cosine move from `from` to `to` centred on `centre`.
fn profile(t: f64, centre: f64, width: f64) -> f64 {
    if width == 0.0 {
        return if t >= centre { 1.0 } else { 0.0 };
    }
    let u = (t - centre) / width + 0.5;
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * u).cos())
    }
}

/// Noise-free gaze of `eye` at time `t`, given the eye's view of each target.
fn ideal(t: f64, steps: &[TargetStep], start: (f64, f64), latency: f64, width: f64) -> (f64, f64) {
    let mut pos = start;
    for s in steps {
        let centre = s.onset_ms + latency;
        if t < centre - width / 2.0 {
            break;
        }
        let w = profile(t, centre, width);
        pos = (pos.0 + (s.x_deg - pos.0) * w, pos.1 + (s.y_deg - pos.1) * w);
    }
    pos
}

struct Frames {
    nominal: Vec<usize>,
    times: Vec<f64>,
}

fn frames(cfg: &SynthConfig, end_ms: f64, rng: &mut ChaCha8Rng) -> Frames {
    let dt = cfg.sample_period_ms();
    let n = (end_ms / dt).ceil() as usize + 1;
    let sd = cfg.isi_jitter_sd_ms / std::f64::consts::SQRT_2;
    let mut nominal = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    for k in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let t = k as f64 * dt + sd * z;
        // Whole nanoseconds, as a tracker clock would report.
        let t = (t * 1e6).round() / 1e6;
        nominal.push(k);
        times.push(t);
    }
    Frames { nominal, times }
}

/// Generates a recording and a record of everything injected into it.
pub fn generate(cfg: &SynthConfig) -> Result<(GazeRecording, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = cfg.sample_period_ms();
    let target = targets(cfg, &mut rng);
    let latency_samples = cfg.latency_samples();
    let latency = latency_samples as f64 * dt;
    let last = target.last().expect("validated: at least one step");
    let next_onset = {
        let dur = rng.random_range(cfg.fixation_min_ms..=cfg.fixation_max_ms);
        last.onset_ms + (dur / dt).round().max(1.0) * dt
    };
    let end_ms = next_onset + latency;
    let Frames { nominal, times } = frames(cfg, end_ms, &mut rng);
    let keep: Vec<bool> = (0..times.len())
        .map(|k| k == 0 || rng.random::<f64>() >= cfg.drop_rate)
        .collect();
    let dropped_frames: Vec<usize> = nominal
        .iter()
        .zip(&keep)
        .filter(|(_, k)| !**k)
        .map(|(n, _)| *n)
        .collect();
    let times: Vec<f64> = times
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(t, _)| *t)
        .collect();

    // Clean positions per eye, before outliers and invalid samples.
    let mut clean: BTreeMap<Eye, Vec<(f64, f64)>> = BTreeMap::new();
    let mut truths: BTreeMap<Eye, ChannelTruth> = BTreeMap::new();
    let monocular_needed = cfg.binocular_filter.is_some();
    let generated: Vec<Eye> = [Eye::Left, Eye::Right, Eye::Binocular]
        .into_iter()
        .filter(|e| cfg.channels.contains(e) || (monocular_needed && e.is_monocular()))
        .collect();
    for &eye in &generated {
        let d = cfg.distortion(eye);
        let steps: Vec<TargetStep> = target
            .iter()
            .map(|&s| correct_target_for_eye(s, eye, cfg.ipd_mm))
            .collect::<Result<_>>()?;
        let start =
            correct_target_for_eye(TargetStep::new(0.0, 0.0, 0.0), eye, cfg.ipd_mm)?.position();
        let mut pos = Vec::with_capacity(times.len());
        for &t in &times {
            let (ix, iy) = ideal(t, &steps, start, latency, cfg.saccade_ms);
            let (mut x, mut y) = d.bias.distort(ix, iy)?;
            x += d.crosstalk.h_linear * iy + d.crosstalk.h_quadratic * iy * iy;
            y += d.crosstalk.v_linear * ix + d.crosstalk.v_quadratic * ix * ix;
            x += noise(&mut rng, d.noise, d.noise_mad_deg);
            y += noise(&mut rng, d.noise, d.noise_mad_deg);
            pos.push((x, y));
        }
        clean.insert(eye, pos);
        truths.insert(
            eye,
            ChannelTruth {
                distortion: *d,
                outlier_indices: Vec::new(),
                invalid_indices: Vec::new(),
                filtered: false,
            },
        );
    }

    let filter_taps = match &cfg.binocular_filter {
        Some(f) => {
            let taps = f.taps(cfg.rate_hz)?;
            let (l, r) = (&clean[&Eye::Left], &clean[&Eye::Right]);
            let vx: Vec<f64> = l.iter().zip(r).map(|(a, b)| 0.5 * (a.0 + b.0)).collect();
            let vy: Vec<f64> = l.iter().zip(r).map(|(a, b)| 0.5 * (a.1 + b.1)).collect();
            let fx = fir_filter(&taps, &vx);
            let fy = fir_filter(&taps, &vy);
            clean.insert(Eye::Binocular, fx.into_iter().zip(fy).collect());
            let t = truths
                .get_mut(&Eye::Binocular)
                .expect("binocular generated");
            t.filtered = true;
            Some(taps)
        }
        None => None,
    };

    let mut channels = Vec::new();
    for &eye in &cfg.channels {
        let d = cfg.distortion(eye);
        let truth = truths.get_mut(&eye).expect("generated");
        let mut samples = Vec::with_capacity(times.len());
        for (i, (&t, &(mut x, mut y))) in times.iter().zip(&clean[&eye]).enumerate() {
            if d.outlier_rate > 0.0 && rng.random::<f64>() < d.outlier_rate {
                let r = rng.random_range(3.0..6.0);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                x += r * a.cos();
                y += r * a.sin();
                truth.outlier_indices.push(i);
            }
            if d.invalid_rate > 0.0 && rng.random::<f64>() < d.invalid_rate {
                truth.invalid_indices.push(i);
                samples.push(GazeSample::invalid(t));
            } else {
                samples.push(GazeSample::new(t, x, y));
            }
        }
        channels.push(GazeChannel::new(eye, samples)?);
    }
    truths.retain(|e, _| cfg.channels.contains(e));

    let calibration_steps = if cfg.calibration_prefix { 13 } else { 0 };
    let recording = GazeRecording::new(
        cfg.subject_id.clone(),
        cfg.device,
        cfg.rate_hz,
        cfg.ipd_mm,
        channels,
        target.clone(),
    )?
    .with_calibration_steps(calibration_steps)?;
    Ok((
        recording,
        GroundTruth {
            config: cfg.clone(),
            latency_samples,
            calibration_steps,
            target,
            channels: truths,
            filter_taps,
            dropped_frames,
        },
    ))
}

/// Closed-form expectations for one channel over the task targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedChannel {
    pub eye: Eye,
    /// Accuracy of the noise-free distorted gaze, averaged over task fixations.
    pub accuracy: AccuracyResult,
    /// Population MAD per axis of the injected noise.
    pub noise_mad_deg: f64,
    pub linearity_slope_h: f64,
    pub linearity_slope_v: f64,
    /// Crosstalk coefficients as injected (offset along the axis versus the
    /// orthogonal position); bias terms are not folded in.
    pub crosstalk_h: CrosstalkCoefficients,
    pub crosstalk_v: CrosstalkCoefficients,
    /// Mean percent of valid analysis-window samples that were displaced.
    pub outlier_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedMetrics {
    pub latency_ms: f64,
    pub isi_mean_ms: f64,
    pub isi_sd_ms: f64,
    pub filter_minus3db_hz: Option<f64>,
    pub channels: Vec<ExpectedChannel>,
}

/// Expected metric values implied by the ground truth.
///
/// Filtered binocular channels report the unfiltered version expectations for
/// accuracy, since fixation windows lie in the filter's steady state.
pub fn ground_truth_report(gt: &GroundTruth, recording: &GazeRecording) -> Result<ExpectedMetrics> {
    let cfg = &gt.config;
    let dt = cfg.sample_period_ms();
    let task = &gt.target[gt.calibration_steps..];
    let mut channels = Vec::new();
    for (&eye, truth) in &gt.channels {
        let d = &truth.distortion;
        let view: Vec<TargetStep> = task
            .iter()
            .map(|&s| correct_target_for_eye(s, eye, cfg.ipd_mm))
            .collect::<Result<_>>()?;
        let mut distorted = Vec::new();
        for s in &view {
            let g = if truth.filtered {
                let l = correct_target_for_eye(*s, Eye::Left, cfg.ipd_mm)?;
                let r = correct_target_for_eye(*s, Eye::Right, cfg.ipd_mm)?;
                let dl = distort_point(&cfg.left, l.position())?;
                let dr = distort_point(&cfg.right, r.position())?;
                (0.5 * (dl.0 + dr.0), 0.5 * (dl.1 + dr.1))
            } else {
                distort_point(d, s.position())?
            };
            distorted.push(g);
        }
        let n = view.len() as f64;
        let mut acc = AccuracyResult::default();
        for (s, g) in view.iter().zip(&distorted) {
            let (dx, dy) = (g.0 - s.x_deg, g.1 - s.y_deg);
            acc.theta_h += dx.abs() / n;
            acc.theta_v += dy.abs() / n;
            acc.theta_c += dx.hypot(dy) / n;
        }
        let slope = |dim: Dimension| -> Result<f64> {
            let x: Vec<f64> = view.iter().map(|s| dim.of_target(s)).collect();
            let y: Vec<f64> = distorted
                .iter()
                .map(|g| {
                    if dim == Dimension::Horizontal {
                        g.0
                    } else {
                        g.1
                    }
                })
                .collect();
            Ok(statkit::ols(&y, &[vec![1.0; x.len()], x])?.coefficients[1])
        };
        let outlier_pct = planted_outlier_pct(gt, recording, eye, truth)?;
        channels.push(ExpectedChannel {
            eye,
            accuracy: acc,
            noise_mad_deg: if truth.filtered {
                f64::NAN
            } else {
                d.noise_mad_deg
            },
            linearity_slope_h: slope(Dimension::Horizontal)?,
            linearity_slope_v: slope(Dimension::Vertical)?,
            crosstalk_h: CrosstalkCoefficients {
                intercept: 0.0,
                linear: d.crosstalk.h_linear,
                quadratic: d.crosstalk.h_quadratic,
            },
            crosstalk_v: CrosstalkCoefficients {
                intercept: 0.0,
                linear: d.crosstalk.v_linear,
                quadratic: d.crosstalk.v_quadratic,
            },
            outlier_pct,
        });
    }
    let filter_minus3db_hz = match &gt.filter_taps {
        Some(t) => {
            let (f, db) = spectral::frequency_response(t, cfg.rate_hz, 8192)?;
            spectral::minus3db_point(&f, &db)
        }
        None => None,
    };
    Ok(ExpectedMetrics {
        latency_ms: gt.latency_samples as f64 * dt,
        isi_mean_ms: dt,
        isi_sd_ms: cfg.isi_jitter_sd_ms,
        filter_minus3db_hz,
        channels,
    })
}

fn distort_point(d: &ChannelDistortion, (ix, iy): (f64, f64)) -> Result<(f64, f64)> {
    let (mut x, mut y) = d.bias.distort(ix, iy)?;
    x += d.crosstalk.h_linear * iy + d.crosstalk.h_quadratic * iy * iy;
    y += d.crosstalk.v_linear * ix + d.crosstalk.v_quadratic * ix * ix;
    Ok((x, y))
}

/// Percent of valid analysis-window samples carrying a planted displacement,
/// averaged over task fixations, using the true latency for alignment.
fn planted_outlier_pct(
    gt: &GroundTruth,
    recording: &GazeRecording,
    eye: Eye,
    truth: &ChannelTruth,
) -> Result<f64> {
    let channel = recording.channel(eye).ok_or(Error::MissingChannel(eye))?;
    let samples = channel.samples();
    let s = gt.latency_samples;
    let window = WindowSpec::default();
    let mut flags = vec![false; samples.len()];
    for &i in &truth.outlier_indices {
        flags[i] = true;
    }
    let mut pcts = Vec::new();
    for k in gt.calibration_steps..gt.target.len() {
        let on = gt.target[k].onset_ms;
        let end = gt.target.get(k + 1).map_or(f64::INFINITY, |t| t.onset_ms);
        let (w0, w1) = (
            on + window.discard_ms,
            (on + window.discard_ms + window.use_ms).min(end),
        );
        let (mut valid, mut planted) = (0usize, 0usize);
        for j in 0..samples.len().saturating_sub(s) {
            let t = samples[j].timestamp_ms;
            if t >= w0 && t < w1 && samples[j + s].valid {
                valid += 1;
                planted += usize::from(flags[j + s]);
            }
        }
        if valid > 0 {
            pcts.push(100.0 * planted as f64 / valid as f64);
        }
    }
    Ok(statkit::mean(&pcts).unwrap_or(0.0))
}

/// Writes the recording files plus `ground_truth.json` into `dir`; returns the manifest path.
pub fn write_corpus_entry(
    dir: &Path,
    recording: &GazeRecording,
    gt: &GroundTruth,
) -> Result<PathBuf> {
    let manifest = save_recording(recording, dir, TimestampUnit::Ns)?;
    let path = dir.join("ground_truth.json");
    let mut json = serde_json::to_string_pretty(gt).map_err(|e| Error::Report(e.to_string()))?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest.path)
}
