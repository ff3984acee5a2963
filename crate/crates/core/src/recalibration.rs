//! Stable-bin selection and polynomial gaze-to-target recalibration.
//!
//! Each fixation of the calibration sequence is cut into bins of consecutive
//! samples; the steadiest bins (smallest radial IQR) supply the gaze/target pairs
//! for two independent least-squares fits, one per output axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::FixationSegment;
use crate::statkit;
use crate::types::{GazeChannel, GazeSample, TargetStep};

pub const DEFAULT_BIN_SIZE: usize = 20;
pub const DEFAULT_BINS_PER_FIXATION: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableBin {
    /// Index of the fixation's target step.
    pub fixation: usize,
    /// Position of the bin within the fixation.
    pub bin: usize,
    /// Half-open range into the fixation's `all_samples`.
    pub start: usize,
    pub end: usize,
    pub iqr_x: f64,
    pub iqr_y: f64,
    pub iqr_radial: f64,
    pub target: TargetStep,
    pub samples: Vec<GazeSample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinSelection {
    pub bins: Vec<StableBin>,
    /// Fixations that contributed no bin.
    pub unusable: Vec<usize>,
    /// Fixations that contributed fewer bins than requested.
    pub short: Vec<usize>,
}

/// Picks the `per_fixation` lowest radial-IQR bins of every fixation.
///
/// Trailing partial bins and bins with any invalid sample are discarded; ties
/// favour the earlier bin.
pub fn select_stable_bins(
    segments: &[FixationSegment],
    bin_size: usize,
    per_fixation: usize,
) -> BinSelection {
    let mut out = BinSelection::default();
    if bin_size == 0 {
        out.unusable = segments.iter().map(|s| s.index).collect();
        return out;
    }
    for seg in segments {
        let mut candidates: Vec<StableBin> = seg
            .all_samples
            .chunks_exact(bin_size)
            .enumerate()
            .filter(|(_, chunk)| chunk.iter().all(|s| s.valid))
            .map(|(b, chunk)| {
                let xs: Vec<f64> = chunk.iter().map(|s| s.x_deg).collect();
                let ys: Vec<f64> = chunk.iter().map(|s| s.y_deg).collect();
                let iqr_x = statkit::iqr(&xs).unwrap();
                let iqr_y = statkit::iqr(&ys).unwrap();
                StableBin {
                    fixation: seg.index,
                    bin: b,
                    start: b * bin_size,
                    end: (b + 1) * bin_size,
                    iqr_x,
                    iqr_y,
                    iqr_radial: iqr_x.hypot(iqr_y),
                    target: seg.target,
                    samples: chunk.to_vec(),
                }
            })
            .collect();
        candidates.sort_by(|a, b| {
            a.iqr_radial
                .total_cmp(&b.iqr_radial)
                .then(a.bin.cmp(&b.bin))
        });
        candidates.truncate(per_fixation);
        if candidates.is_empty() {
            log::warn!("{}", Error::NoUsableBins(seg.index));
            out.unusable.push(seg.index);
        } else if candidates.len() < per_fixation {
            out.short.push(seg.index);
        }
        out.bins.extend(candidates);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    /// `x' = A·x + B·y + C`
    Usc1,
    /// `x' = A·x² + B·y² + C·x + D·y + E`
    Usc2,
}

impl CalibrationKind {
    pub fn n_weights(&self) -> usize {
        match self {
            CalibrationKind::Usc1 => 3,
            CalibrationKind::Usc2 => 5,
        }
    }

    fn min_targets(&self) -> usize {
        match self {
            CalibrationKind::Usc1 => 3,
            CalibrationKind::Usc2 => 5,
        }
    }

    fn terms(&self, x: f64, y: f64) -> Vec<f64> {
        match self {
            CalibrationKind::Usc1 => vec![x, y, 1.0],
            CalibrationKind::Usc2 => vec![x * x, y * y, x, y, 1.0],
        }
    }
}

/// Fitted mapping from measured gaze to corrected gaze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NamedWeights", into = "NamedWeights")]
pub struct CalibrationMap {
    kind: CalibrationKind,
    weights_x: Vec<f64>,
    weights_y: Vec<f64>,
}

impl CalibrationMap {
    pub fn new(kind: CalibrationKind, weights_x: Vec<f64>, weights_y: Vec<f64>) -> Result<Self> {
        if weights_x.len() != kind.n_weights() || weights_y.len() != kind.n_weights() {
            return Err(Error::InvalidRecording(format!(
                "{kind:?} maps need {} weights per axis",
                kind.n_weights()
            )));
        }
        Ok(Self {
            kind,
            weights_x,
            weights_y,
        })
    }

    pub fn identity(kind: CalibrationKind) -> Self {
        let (wx, wy) = match kind {
            CalibrationKind::Usc1 => (vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
            CalibrationKind::Usc2 => (vec![0.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0, 0.0]),
        };
        Self {
            kind,
            weights_x: wx,
            weights_y: wy,
        }
    }

    pub fn kind(&self) -> CalibrationKind {
        self.kind
    }

    pub fn weights_x(&self) -> &[f64] {
        &self.weights_x
    }

    pub fn weights_y(&self) -> &[f64] {
        &self.weights_y
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let terms = self.kind.terms(x, y);
        let dot = |w: &[f64]| terms.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        (dot(&self.weights_x), dot(&self.weights_y))
    }
}

/// JSON form: the kind plus weights `a..e` per axis; unused letters are zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedWeights {
    kind: CalibrationKind,
    a_x: f64,
    b_x: f64,
    c_x: f64,
    #[serde(default)]
    d_x: f64,
    #[serde(default)]
    e_x: f64,
    a_y: f64,
    b_y: f64,
    c_y: f64,
    #[serde(default)]
    d_y: f64,
    #[serde(default)]
    e_y: f64,
}

impl From<CalibrationMap> for NamedWeights {
    fn from(m: CalibrationMap) -> Self {
        let mut wx = m.weights_x;
        let mut wy = m.weights_y;
        wx.resize(5, 0.0);
        wy.resize(5, 0.0);
        NamedWeights {
            kind: m.kind,
            a_x: wx[0],
            b_x: wx[1],
            c_x: wx[2],
            d_x: wx[3],
            e_x: wx[4],
            a_y: wy[0],
            b_y: wy[1],
            c_y: wy[2],
            d_y: wy[3],
            e_y: wy[4],
        }
    }
}

impl TryFrom<NamedWeights> for CalibrationMap {
    type Error = String;

    fn try_from(w: NamedWeights) -> std::result::Result<Self, String> {
        let mut wx = vec![w.a_x, w.b_x, w.c_x, w.d_x, w.e_x];
        let mut wy = vec![w.a_y, w.b_y, w.c_y, w.d_y, w.e_y];
        let n = w.kind.n_weights();
        if wx[n..].iter().chain(&wy[n..]).any(|v| *v != 0.0) {
            return Err("usc1 maps only use weights a, b and c".into());
        }
        wx.truncate(n);
        wy.truncate(n);
        CalibrationMap::new(w.kind, wx, wy).map_err(|e| e.to_string())
    }
}

/// Fits the map on every sample of the selected bins against their targets.
pub fn fit_calibration(bins: &[StableBin], kind: CalibrationKind) -> Result<CalibrationMap> {
    let mut targets: Vec<(f64, f64)> = bins.iter().map(|b| b.target.position()).collect();
    targets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    targets.dedup();
    if targets.len() < kind.min_targets() {
        return Err(Error::InsufficientData(format!(
            "{} distinct calibration targets; {kind:?} needs {}",
            targets.len(),
            kind.min_targets()
        )));
    }
    let n_terms = kind.n_weights();
    let mut columns = vec![Vec::new(); n_terms];
    let mut tx = Vec::new();
    let mut ty = Vec::new();
    for bin in bins {
        for s in &bin.samples {
            for (col, v) in columns.iter_mut().zip(kind.terms(s.x_deg, s.y_deg)) {
                col.push(v);
            }
            tx.push(bin.target.x_deg);
            ty.push(bin.target.y_deg);
        }
    }
    let fx = statkit::ols(&tx, &columns)?;
    let fy = statkit::ols(&ty, &columns)?;
    CalibrationMap::new(kind, fx.coefficients, fy.coefficients)
}

pub fn apply_calibration(channel: &GazeChannel, map: &CalibrationMap) -> GazeChannel {
    channel.map_valid(|x, y| map.apply(x, y))
}
