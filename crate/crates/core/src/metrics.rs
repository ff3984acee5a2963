//! Accuracy, precision, temporal precision, linearity and crosstalk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::FixationSegment;
use crate::statkit::{self, OlsFit};
use crate::types::{Dimension, GazeChannel};

pub const DEFAULT_DROP_MS: f64 = 6.0;
pub const DEFAULT_SHORT_MS: f64 = 0.04;

/// Mean absolute offsets from the target, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AccuracyResult {
    pub theta_h: f64,
    pub theta_v: f64,
    pub theta_c: f64,
}

/// Median absolute deviations, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PrecisionResult {
    pub mad_h: f64,
    pub mad_v: f64,
    pub mad_c: f64,
}

/// How per-fixation values are summarised for a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

impl Aggregation {
    fn apply(&self, v: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => statkit::mean(v),
            Aggregation::Median => statkit::median(v),
        }
        .unwrap_or(f64::NAN)
    }
}

pub fn spatial_accuracy(segment: &FixationSegment) -> Result<AccuracyResult> {
    let n = segment.kept_count();
    if n == 0 {
        return Err(Error::NoValidSamples);
    }
    let (tx, ty) = segment.target.position();
    let (mut h, mut v, mut c) = (0.0, 0.0, 0.0);
    for s in segment.kept() {
        let (dx, dy) = (s.x_deg - tx, s.y_deg - ty);
        h += dx.abs();
        v += dy.abs();
        c += dx.hypot(dy);
    }
    let n = n as f64;
    Ok(AccuracyResult {
        theta_h: h / n,
        theta_v: v / n,
        theta_c: c / n,
    })
}

/// Raw MADs per axis about the scalar median; the combined value uses
/// deviations from the geometric median.
pub fn spatial_precision(segment: &FixationSegment) -> Result<PrecisionResult> {
    let xs: Vec<f64> = segment.kept().map(|s| s.x_deg).collect();
    let ys: Vec<f64> = segment.kept().map(|s| s.y_deg).collect();
    if xs.is_empty() {
        return Err(Error::NoValidSamples);
    }
    let points: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    let (gx, gy) = statkit::geometric_median(&points).expect("non-empty");
    let dx: Vec<f64> = xs.iter().map(|x| (x - gx).abs()).collect();
    let dy: Vec<f64> = ys.iter().map(|y| (y - gy).abs()).collect();
    Ok(PrecisionResult {
        mad_h: statkit::mad(&xs).unwrap(),
        mad_v: statkit::mad(&ys).unwrap(),
        mad_c: statkit::median(&dx)
            .unwrap()
            .hypot(statkit::median(&dy).unwrap()),
    })
}

fn usable(segments: &[FixationSegment]) -> impl Iterator<Item = &FixationSegment> {
    segments.iter().filter(|s| s.kept_count() > 0)
}

/// Summarises per-fixation accuracy over every fixation with kept samples.
pub fn recording_accuracy(
    segments: &[FixationSegment],
    agg: Aggregation,
) -> Result<AccuracyResult> {
    let per: Vec<AccuracyResult> = usable(segments)
        .map(spatial_accuracy)
        .collect::<Result<_>>()?;
    if per.is_empty() {
        return Err(Error::NoValidSamples);
    }
    let col = |f: fn(&AccuracyResult) -> f64| agg.apply(&per.iter().map(f).collect::<Vec<_>>());
    Ok(AccuracyResult {
        theta_h: col(|a| a.theta_h),
        theta_v: col(|a| a.theta_v),
        theta_c: col(|a| a.theta_c),
    })
}

pub fn recording_precision(
    segments: &[FixationSegment],
    agg: Aggregation,
) -> Result<PrecisionResult> {
    let per: Vec<PrecisionResult> = usable(segments)
        .map(spatial_precision)
        .collect::<Result<_>>()?;
    if per.is_empty() {
        return Err(Error::NoValidSamples);
    }
    let col = |f: fn(&PrecisionResult) -> f64| agg.apply(&per.iter().map(f).collect::<Vec<_>>());
    Ok(PrecisionResult {
        mad_h: col(|p| p.mad_h),
        mad_v: col(|p| p.mad_v),
        mad_c: col(|p| p.mad_c),
    })
}

/// Intersample-interval statistics.
///
/// `dropped` and `short` hold the index of the later sample of each offending interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalResult {
    pub isi_mean_ms: f64,
    pub isi_sd_ms: f64,
    pub n_intervals: usize,
    pub dropped: Vec<usize>,
    pub short: Vec<usize>,
}

pub fn temporal_precision(
    channel: &GazeChannel,
    drop_ms: f64,
    short_ms: f64,
) -> Result<TemporalResult> {
    if channel.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples; temporal precision needs at least 3",
            channel.len()
        )));
    }
    let isi: Vec<f64> = channel
        .samples()
        .windows(2)
        .map(|w| w[1].timestamp_ms - w[0].timestamp_ms)
        .collect();
    let pick = |pred: &dyn Fn(f64) -> bool| -> Vec<usize> {
        isi.iter()
            .enumerate()
            .filter(|(_, &d)| pred(d))
            .map(|(i, _)| i + 1)
            .collect()
    };
    Ok(TemporalResult {
        isi_mean_ms: statkit::mean(&isi).unwrap(),
        isi_sd_ms: statkit::sample_sd(&isi).unwrap(),
        n_intervals: isi.len(),
        dropped: pick(&|d| d > drop_ms),
        short: pick(&|d| d < short_ms),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearityResult {
    pub dimension: Dimension,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci95: (f64, f64),
    pub r2: f64,
    pub n_fixations: usize,
}

/// Fixations eligible for the regressions: screened enough and with a centroid.
fn regression_points(segments: &[FixationSegment], dim: Dimension) -> Vec<(&FixationSegment, f64)> {
    segments
        .iter()
        .filter(|s| !s.low_n && !s.empty)
        .filter_map(|s| {
            let (cx, cy) = s.centroid()?;
            Some((s, if dim == Dimension::Horizontal { cx } else { cy }))
        })
        .collect()
}

/// Regresses fixation centroids on target positions along one dimension.
pub fn linearity(segments: &[FixationSegment], dim: Dimension) -> Result<LinearityResult> {
    let pts = regression_points(segments, dim);
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable fixations; linearity needs at least 3",
            pts.len()
        )));
    }
    let x: Vec<f64> = pts.iter().map(|(s, _)| dim.of_target(&s.target)).collect();
    let y: Vec<f64> = pts.iter().map(|(_, c)| *c).collect();
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::DegenerateDesign("all target positions are equal"));
    }
    let fit = statkit::ols(&y, &[vec![1.0; x.len()], x])?;
    Ok(LinearityResult {
        dimension: dim,
        slope: fit.coefficients[1],
        intercept: fit.coefficients[0],
        slope_ci95: fit.confidence_interval(1, 0.95),
        r2: fit.r2,
        n_fixations: pts.len(),
    })
}

/// Candidate models for the offset-versus-orthogonal-target relation, each with an intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrosstalkModel {
    InterceptOnly,
    LinearOnly,
    QuadraticOnly,
    LinearPlusQuadratic,
}

impl CrosstalkModel {
    pub const ALL: [CrosstalkModel; 4] = [
        CrosstalkModel::InterceptOnly,
        CrosstalkModel::LinearOnly,
        CrosstalkModel::QuadraticOnly,
        CrosstalkModel::LinearPlusQuadratic,
    ];

    pub fn n_params(&self) -> usize {
        match self {
            CrosstalkModel::InterceptOnly => 1,
            CrosstalkModel::LinearOnly | CrosstalkModel::QuadraticOnly => 2,
            CrosstalkModel::LinearPlusQuadratic => 3,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CrosstalkModel::InterceptOnly => "intercept_only",
            CrosstalkModel::LinearOnly => "linear_only",
            CrosstalkModel::QuadraticOnly => "quadratic_only",
            CrosstalkModel::LinearPlusQuadratic => "linear_plus_quadratic",
        }
    }

    fn design(&self, t: &[f64]) -> Vec<Vec<f64>> {
        let mut cols = vec![vec![1.0; t.len()]];
        if matches!(
            self,
            CrosstalkModel::LinearOnly | CrosstalkModel::LinearPlusQuadratic
        ) {
            cols.push(t.to_vec());
        }
        if matches!(
            self,
            CrosstalkModel::QuadraticOnly | CrosstalkModel::LinearPlusQuadratic
        ) {
            cols.push(t.iter().map(|v| v * v).collect());
        }
        cols
    }
}

/// Coefficients of the selected crosstalk model; absent terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CrosstalkCoefficients {
    pub intercept: f64,
    pub linear: f64,
    pub quadratic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkResult {
    /// Axis of the offset being explained.
    pub direction: Dimension,
    pub chosen_model: CrosstalkModel,
    pub coefficients: CrosstalkCoefficients,
    /// AIC of every candidate in declaration order; positive infinity marks a
    /// model whose design was rank deficient.
    #[serde(with = "crate::report::nonfinite_vec")]
    pub aic: Vec<f64>,
    pub n_fixations: usize,
}

/// Index of the best AIC; ties go to fewer parameters, then declaration order.
pub fn select_model(aic: &[f64]) -> CrosstalkModel {
    let mut best = CrosstalkModel::InterceptOnly;
    for (m, &a) in CrosstalkModel::ALL.iter().zip(aic) {
        let b = aic[best as usize];
        if a < b || (a == b && m.n_params() < best.n_params()) {
            best = *m;
        }
    }
    best
}

fn fit_all(t: &[f64], offsets: &[f64]) -> Result<Vec<Option<OlsFit>>> {
    CrosstalkModel::ALL
        .iter()
        .map(|m| match statkit::ols(offsets, &m.design(t)) {
            Ok(f) => Ok(Some(f)),
            Err(Error::RankDeficient) if *m != CrosstalkModel::InterceptOnly => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Fits all four models of `offsets` on the orthogonal target coordinate `t`
/// and returns the AIC-best.
pub fn crosstalk_from_points(
    direction: Dimension,
    t: &[f64],
    offsets: &[f64],
) -> Result<CrosstalkResult> {
    if t.len() != offsets.len() {
        return Err(Error::DegenerateDesign("target and offset counts differ"));
    }
    if t.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} usable fixations; crosstalk needs at least 5",
            t.len()
        )));
    }
    if t.iter().all(|v| *v == t[0]) {
        return Err(Error::DegenerateDesign(
            "all orthogonal target positions are equal",
        ));
    }
    let fits = fit_all(t, offsets)?;
    let aic: Vec<f64> = fits
        .iter()
        .map(|f| f.as_ref().map_or(f64::INFINITY, statkit::aic))
        .collect();
    let chosen = select_model(&aic);
    let fit = fits[chosen as usize]
        .as_ref()
        .expect("chosen model was fitted");
    let c = &fit.coefficients;
    let coefficients = match chosen {
        CrosstalkModel::InterceptOnly => CrosstalkCoefficients {
            intercept: c[0],
            ..Default::default()
        },
        CrosstalkModel::LinearOnly => CrosstalkCoefficients {
            intercept: c[0],
            linear: c[1],
            quadratic: 0.0,
        },
        CrosstalkModel::QuadraticOnly => CrosstalkCoefficients {
            intercept: c[0],
            linear: 0.0,
            quadratic: c[1],
        },
        CrosstalkModel::LinearPlusQuadratic => CrosstalkCoefficients {
            intercept: c[0],
            linear: c[1],
            quadratic: c[2],
        },
    };
    Ok(CrosstalkResult {
        direction,
        chosen_model: chosen,
        coefficients,
        aic,
        n_fixations: t.len(),
    })
}

/// Crosstalk of the centroid offset along `direction` on the orthogonal target coordinate.
pub fn crosstalk(segments: &[FixationSegment], direction: Dimension) -> Result<CrosstalkResult> {
    let pts = regression_points(segments, direction);
    let orth = direction.orthogonal();
    let t: Vec<f64> = pts.iter().map(|(s, _)| orth.of_target(&s.target)).collect();
    let offsets: Vec<f64> = pts
        .iter()
        .map(|(s, c)| c - direction.of_target(&s.target))
        .collect();
    crosstalk_from_points(direction, &t, &offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Eye, GazeSample, TargetStep};
    use proptest::prelude::*;

    fn segment(target: (f64, f64), pts: &[(f64, f64)]) -> FixationSegment {
        let samples: Vec<GazeSample> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| GazeSample::new(i as f64 * 4.0, x, y))
            .collect();
        let mut seg = crate::preprocess::segment_aligned(
            &GazeChannel::new(Eye::Binocular, samples).unwrap(),
            &[TargetStep::new(0.0, target.0, target.1)],
            crate::preprocess::WindowSpec {
                discard_ms: 0.0,
                use_ms: 1e9,
            },
        );
        seg.pop().unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let on = segment((2.0, 3.0), &[(2.0, 3.0); 12]);
        assert_eq!(spatial_accuracy(&on).unwrap(), AccuracyResult::default());
        let pm = segment((0.0, 0.0), &[(1.0, 0.0), (-1.0, 0.0)]);
        assert_eq!(
            spatial_accuracy(&pm).unwrap(),
            AccuracyResult {
                theta_h: 1.0,
                theta_v: 0.0,
                theta_c: 1.0
            }
        );
        let biased = segment((4.0, -3.0), &[(4.3, -3.2); 125]);
        let a = spatial_accuracy(&biased).unwrap();
        assert!((a.theta_h - 0.3).abs() < 1e-12);
        assert!((a.theta_v - 0.2).abs() < 1e-12);
        assert!((a.theta_c - 0.13f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn precision_examples() {
        let pts: Vec<(f64, f64)> = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]
            .iter()
            .map(|&x| (x, 0.0))
            .collect();
        let p = spatial_precision(&segment((0.0, 0.0), &pts)).unwrap();
        assert_eq!(p.mad_h, 1.0);
        let same = spatial_precision(&segment((0.0, 0.0), &[(0.7, 0.1); 9])).unwrap();
        assert_eq!(same, PrecisionResult::default());
    }

    #[test]
    fn empty_segment_errors() {
        let mut seg = segment((0.0, 0.0), &[(0.0, 0.0)]);
        seg.status[0] = crate::preprocess::SampleStatus::OutlierStep1;
        assert!(matches!(spatial_accuracy(&seg), Err(Error::NoValidSamples)));
        assert!(matches!(
            spatial_precision(&seg),
            Err(Error::NoValidSamples)
        ));
    }

    fn chan(ts: &[f64]) -> GazeChannel {
        GazeChannel::new(
            Eye::Left,
            ts.iter().map(|&t| GazeSample::new(t, 0.0, 0.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn temporal_examples() {
        let r = temporal_precision(&chan(&[0.0, 4.0, 8.0, 12.0]), 6.0, 0.04).unwrap();
        assert_eq!((r.isi_mean_ms, r.isi_sd_ms), (4.0, 0.0));
        assert!(r.dropped.is_empty() && r.short.is_empty());
        let d = temporal_precision(&chan(&[0.0, 4.0, 11.0, 15.0]), 6.0, 0.04).unwrap();
        assert_eq!(d.dropped, vec![2]);
        let s = temporal_precision(&chan(&[0.0, 4.0, 4.03, 8.0, 14.0]), 6.0, 0.04).unwrap();
        assert_eq!(s.short, vec![2]);
        assert!(s.dropped.is_empty(), "ISI of exactly 6 ms is not dropped");
        assert!(temporal_precision(&chan(&[0.0, 4.0]), 6.0, 0.04).is_err());
    }

    fn grid_segments(f: impl Fn(f64, f64) -> (f64, f64)) -> Vec<FixationSegment> {
        let mut out = Vec::new();
        for &x in &[-15.0, -7.5, 0.0, 7.5, 15.0] {
            for &y in &[-10.0, 0.0, 10.0] {
                out.push(segment((x, y), &[f(x, y); 20]));
            }
        }
        out
    }

    #[test]
    fn linearity_identity_and_affine() {
        let id = linearity(&grid_segments(|x, y| (x, y)), Dimension::Horizontal).unwrap();
        assert!((id.slope - 1.0).abs() < 1e-12 && (id.r2 - 1.0).abs() < 1e-12);
        assert!(id.slope_ci95.0 <= 1.0 + 1e-12 && id.slope_ci95.1 >= 1.0 - 1e-12);
        let aff = linearity(
            &grid_segments(|x, y| (x, 0.9 * y + 0.5)),
            Dimension::Vertical,
        )
        .unwrap();
        assert!((aff.slope - 0.9).abs() < 1e-12);
        assert!((aff.intercept - 0.5).abs() < 1e-12);
        assert!((aff.slope_ci95.1 - aff.slope_ci95.0).abs() < 1e-9);
    }

    #[test]
    fn linearity_degenerate() {
        let segs: Vec<_> = (0..5)
            .map(|_| segment((1.0, 1.0), &[(1.0, 1.0); 20]))
            .collect();
        assert!(matches!(
            linearity(&segs, Dimension::Horizontal),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn low_n_segments_are_excluded() {
        let mut segs = grid_segments(|x, y| (x, y));
        segs.push(segment((3.0, 3.0), &[(30.0, 30.0); 5]));
        let r = linearity(&segs, Dimension::Horizontal).unwrap();
        assert_eq!(r.n_fixations, 15);
    }

    #[test]
    fn crosstalk_constant_offsets() {
        let r = crosstalk(&grid_segments(|x, y| (x + 0.2, y)), Dimension::Horizontal).unwrap();
        assert_eq!(r.chosen_model, CrosstalkModel::InterceptOnly);
        assert!((r.coefficients.intercept - 0.2).abs() < 1e-12);
    }

    #[test]
    fn crosstalk_exact_quadratic() {
        let r = crosstalk(
            &grid_segments(|x, y| (x, y + 0.01 * x * x)),
            Dimension::Vertical,
        )
        .unwrap();
        assert_eq!(r.chosen_model, CrosstalkModel::QuadraticOnly);
        assert!((r.coefficients.quadratic - 0.01).abs() < 1e-12);
    }

    #[test]
    fn crosstalk_linear_plus_quadratic() {
        let t: Vec<f64> = (0..30).map(|i| -10.0 + 20.0 * i as f64 / 29.0).collect();
        let noise = [0.3, -0.1, 0.2, -0.4, 0.0, 0.1, -0.2, 0.4, -0.3, 0.1];
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, v)| 0.05 * v + 0.01 * v * v + 0.002 * noise[i % 10])
            .collect();
        let r = crosstalk_from_points(Dimension::Horizontal, &t, &y).unwrap();
        assert_eq!(r.chosen_model, CrosstalkModel::LinearPlusQuadratic);
    }

    #[test]
    fn crosstalk_needs_five_fixations() {
        assert!(crosstalk_from_points(Dimension::Horizontal, &[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn selection_tie_breaks() {
        let inf = f64::NEG_INFINITY;
        assert_eq!(
            select_model(&[inf, inf, inf, inf]),
            CrosstalkModel::InterceptOnly
        );
        assert_eq!(
            select_model(&[1.0, 0.0, 0.0, -1.0]),
            CrosstalkModel::LinearPlusQuadratic
        );
        assert_eq!(
            select_model(&[1.0, 0.5, 0.5, 0.5]),
            CrosstalkModel::LinearOnly
        );
    }

    proptest! {
        #[test]
        fn accuracy_translation_equivariant(
            pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..40),
            dx in -10.0f64..10.0, dy in -10.0f64..10.0
        ) {
            let a = spatial_accuracy(&segment((0.5, -0.5), &pts)).unwrap();
            let moved: Vec<_> = pts.iter().map(|p| (p.0 + dx, p.1 + dy)).collect();
            let b = spatial_accuracy(&segment((0.5 + dx, -0.5 + dy), &moved)).unwrap();
            prop_assert!((a.theta_h - b.theta_h).abs() < 1e-9);
            prop_assert!((a.theta_v - b.theta_v).abs() < 1e-9);
            prop_assert!((a.theta_c - b.theta_c).abs() < 1e-9);
            prop_assert!(a.theta_c <= a.theta_h + a.theta_v + 1e-12);
            prop_assert!(a.theta_c + 1e-12 >= a.theta_h.max(a.theta_v) / 2f64.sqrt());
        }

        #[test]
        fn precision_order_and_translation_invariant(
            pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2..40),
            dx in -10.0f64..10.0
        ) {
            let a = spatial_precision(&segment((0.0, 0.0), &pts)).unwrap();
            let mut rev = pts.clone();
            rev.reverse();
            let b = spatial_precision(&segment((0.0, 0.0), &rev)).unwrap();
            let moved: Vec<_> = pts.iter().map(|p| (p.0 + dx, p.1 - dx)).collect();
            let c = spatial_precision(&segment((0.0, 0.0), &moved)).unwrap();
            prop_assert_eq!(a.mad_h, b.mad_h);
            prop_assert!((a.mad_c - b.mad_c).abs() < 1e-7);
            prop_assert!((a.mad_h - c.mad_h).abs() < 1e-9);
            prop_assert!((a.mad_c - c.mad_c).abs() < 1e-7);
        }

        #[test]
        fn crosstalk_choice_invariant_to_constant(
            y in proptest::collection::vec(-1.0f64..1.0, 12), shift in -5.0f64..5.0
        ) {
            let t: Vec<f64> = (0..12).map(|i| i as f64 - 5.5).collect();
            let a = crosstalk_from_points(Dimension::Horizontal, &t, &y).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let b = crosstalk_from_points(Dimension::Horizontal, &t, &ys).unwrap();
            prop_assert_eq!(a.chosen_model, b.chosen_model);
        }
    }
}
