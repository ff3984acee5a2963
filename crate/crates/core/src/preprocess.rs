//! Latency alignment, fixation segmentation and outlier screening.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::correct_target_for_eye;
use crate::statkit;
use crate::types::{Eye, GazeChannel, GazeRecording, GazeSample, TargetStep};

pub const DEFAULT_MAX_SHIFT: usize = 200;
pub const DEFAULT_ABS_LIMIT_DEG: f64 = 2.0;
/// Segments with fewer kept samples are left out of the regressions.
pub const LOW_N_THRESHOLD: usize = 10;

/// Whole-sample delay between target onsets and the gaze response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub shift_samples: usize,
    pub shift_ms: f64,
    /// `(shift, mean Euclidean distance)`; shifts with no comparable samples are omitted.
    pub distance_curve: Vec<(usize, f64)>,
}

/// Index of the step shown at time `t`, or `None` before the first onset.
fn step_at(target: &[TargetStep], t: f64) -> Option<usize> {
    target.partition_point(|s| s.onset_ms <= t).checked_sub(1)
}

fn median_isi(channel: &GazeChannel) -> f64 {
    let isi: Vec<f64> = channel
        .samples()
        .windows(2)
        .map(|w| w[1].timestamp_ms - w[0].timestamp_ms)
        .collect();
    statkit::median(&isi).unwrap_or(0.0)
}

/// Finds the gaze delay that best matches the target signal.
///
/// For each shift `s` in `1..=max_shift`, the sample `i + s` is compared with the
/// target shown (zero-order hold) at the time of sample `i`. Samples before the
/// first onset and invalid samples are skipped. The shift with the lowest mean
/// distance wins, ties going to the smaller shift.
pub fn estimate_latency(
    channel: &GazeChannel,
    target: &[TargetStep],
    max_shift: usize,
) -> Result<LatencyEstimate> {
    if target.len() < 2 {
        return Err(Error::InsufficientData(
            "latency search needs at least 2 target steps".into(),
        ));
    }
    if max_shift == 0 {
        return Err(Error::InsufficientData(
            "maximum shift must be at least one sample".into(),
        ));
    }
    if channel.valid_count() <= max_shift {
        return Err(Error::InsufficientData(format!(
            "{} valid samples for a {max_shift}-sample latency search",
            channel.valid_count()
        )));
    }
    let samples = channel.samples();
    let n = samples.len();
    let held: Vec<Option<(f64, f64)>> = samples
        .iter()
        .map(|s| step_at(target, s.timestamp_ms).map(|k| target[k].position()))
        .collect();

    let mut curve = Vec::with_capacity(max_shift);
    for shift in 1..=max_shift.min(n - 1) {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n - shift {
            let (Some((tx, ty)), g) = (held[i], &samples[i + shift]) else {
                continue;
            };
            if g.valid {
                sum += (g.x_deg - tx).hypot(g.y_deg - ty);
                count += 1;
            }
        }
        if count > 0 {
            curve.push((shift, sum / count as f64));
        }
    }
    let &(best, _) = curve
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| {
            Error::InsufficientData("no valid samples follow the first target onset".into())
        })?;
    Ok(LatencyEstimate {
        shift_samples: best,
        shift_ms: best as f64 * median_isi(channel),
        distance_curve: curve,
    })
}

/// Moves gaze earlier by `shift` samples: sample `j` keeps its timestamp but
/// takes the position and validity of sample `j + shift`.
pub fn align_channel(channel: &GazeChannel, shift: usize) -> GazeChannel {
    let s = channel.samples();
    let n = s.len().saturating_sub(shift);
    let samples = (0..n)
        .map(|j| GazeSample {
            timestamp_ms: s[j].timestamp_ms,
            ..s[j + shift]
        })
        .collect();
    GazeChannel::from_trusted(channel.eye(), samples)
}

/// Which part of each fixation enters the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub discard_ms: f64,
    pub use_ms: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            discard_ms: 400.0,
            use_ms: 500.0,
        }
    }
}

/// Fate of one analysis-window sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Kept,
    Invalid,
    OutlierStep1,
    OutlierStep2,
}

/// Reference values fixed by the first screening pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub centroid: (f64, f64),
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub abs_limit_deg: f64,
}

/// The samples attributed to one target step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationSegment {
    /// Position of the step in the recording's target sequence.
    pub index: usize,
    /// Target in the frame of the analysed eye.
    pub target: TargetStep,
    /// Analysis window.
    pub samples: Vec<GazeSample>,
    /// Every sample from this onset up to the next.
    pub all_samples: Vec<GazeSample>,
    /// Parallel to `samples`.
    pub status: Vec<SampleStatus>,
    pub screening: Option<Screening>,
    pub n_outliers_step1: usize,
    pub n_outliers_step2: usize,
    /// The analysis window holds no valid sample.
    pub empty: bool,
    /// Too few valid samples to screen; left unscreened.
    pub unscreened: bool,
    /// Fewer than `LOW_N_THRESHOLD` kept samples.
    pub low_n: bool,
}

impl FixationSegment {
    fn new(
        index: usize,
        target: TargetStep,
        samples: Vec<GazeSample>,
        all_samples: Vec<GazeSample>,
    ) -> Self {
        let status: Vec<SampleStatus> = samples
            .iter()
            .map(|s| {
                if s.valid {
                    SampleStatus::Kept
                } else {
                    SampleStatus::Invalid
                }
            })
            .collect();
        let kept = status.iter().filter(|s| **s == SampleStatus::Kept).count();
        Self {
            index,
            target,
            samples,
            all_samples,
            status,
            screening: None,
            n_outliers_step1: 0,
            n_outliers_step2: 0,
            empty: kept == 0,
            unscreened: false,
            low_n: kept < LOW_N_THRESHOLD,
        }
    }

    pub fn kept(&self) -> impl Iterator<Item = &GazeSample> + '_ {
        self.samples
            .iter()
            .zip(&self.status)
            .filter(|(_, st)| **st == SampleStatus::Kept)
            .map(|(s, _)| s)
    }

    pub fn kept_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| **s == SampleStatus::Kept)
            .count()
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.samples.len() - self.valid_count()
    }

    /// Arithmetic mean of the kept samples.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let n = self.kept_count();
        if n == 0 {
            return None;
        }
        let (sx, sy) = self
            .kept()
            .fold((0.0, 0.0), |(a, b), s| (a + s.x_deg, b + s.y_deg));
        Some((sx / n as f64, sy / n as f64))
    }
}

/// Splits a latency-aligned channel into one segment per target step.
///
/// `targets` must already be expressed in the channel's eye frame. The last
/// step runs to the final sample; samples before the first onset are unused.
pub fn segment_aligned(
    channel: &GazeChannel,
    targets: &[TargetStep],
    window: WindowSpec,
) -> Vec<FixationSegment> {
    let samples = channel.samples();
    targets
        .iter()
        .enumerate()
        .map(|(k, step)| {
            let end = targets.get(k + 1).map_or(f64::INFINITY, |s| s.onset_ms);
            let lo = samples.partition_point(|s| s.timestamp_ms < step.onset_ms);
            let hi = samples.partition_point(|s| s.timestamp_ms < end);
            let all = &samples[lo..hi.max(lo)];
            let w0 = step.onset_ms + window.discard_ms;
            let w1 = (w0 + window.use_ms).min(end);
            let window: Vec<GazeSample> = all
                .iter()
                .filter(|s| s.timestamp_ms >= w0 && s.timestamp_ms < w1)
                .copied()
                .collect();
            FixationSegment::new(k, *step, window, all.to_vec())
        })
        .collect()
}

/// Target sequence as seen from `eye`.
///
/// Binocular uses it unchanged. Version, being the mean of both eyes, is
/// compared with the mean of the two per-eye targets.
pub fn targets_for_eye(target: &[TargetStep], eye: Eye, ipd_mm: f64) -> Result<Vec<TargetStep>> {
    target
        .iter()
        .map(|&s| {
            if eye == Eye::Version {
                let l = correct_target_for_eye(s, Eye::Left, ipd_mm)?;
                let r = correct_target_for_eye(s, Eye::Right, ipd_mm)?;
                Ok(TargetStep {
                    x_deg: 0.5 * (l.x_deg + r.x_deg),
                    y_deg: 0.5 * (l.y_deg + r.y_deg),
                    ..s
                })
            } else {
                correct_target_for_eye(s, eye, ipd_mm)
            }
        })
        .collect()
}

/// Aligns one eye's channel by the estimated latency and segments it.
pub fn segment_fixations(
    recording: &GazeRecording,
    eye: Eye,
    shift: &LatencyEstimate,
    window: WindowSpec,
) -> Result<Vec<FixationSegment>> {
    let channel = recording.channel_or_derived(eye)?;
    let aligned = align_channel(&channel, shift.shift_samples);
    let targets = targets_for_eye(recording.target(), eye, recording.ipd_mm())?;
    let segments = segment_aligned(&aligned, &targets, window);
    for seg in segments.iter().filter(|s| s.empty) {
        log::warn!(
            "{}: {eye} fixation {} has no valid samples",
            recording.subject_id(),
            seg.index
        );
    }
    Ok(segments)
}

/// Two-stage outlier screening of the analysis window.
///
/// Step 1 drops samples whose distance to the mean centroid lies outside
/// Tukey's fences; step 2 drops survivors farther than `abs_limit_deg` from the
/// same centroid. A segment that was already screened is returned unchanged.
pub fn remove_outliers(segment: &FixationSegment, abs_limit_deg: f64) -> FixationSegment {
    let mut out = segment.clone();
    if segment.screening.is_some() {
        return out;
    }
    let valid: Vec<usize> = (0..out.samples.len())
        .filter(|&i| out.samples[i].valid)
        .collect();
    if valid.len() < 4 {
        out.unscreened = true;
        out.low_n = out.kept_count() < LOW_N_THRESHOLD;
        return out;
    }
    let n = valid.len() as f64;
    let centroid = (
        valid.iter().map(|&i| out.samples[i].x_deg).sum::<f64>() / n,
        valid.iter().map(|&i| out.samples[i].y_deg).sum::<f64>() / n,
    );
    let dist: Vec<f64> = valid
        .iter()
        .map(|&i| (out.samples[i].x_deg - centroid.0).hypot(out.samples[i].y_deg - centroid.1))
        .collect();
    let (q1, q3) = statkit::quartiles(&dist).expect("non-empty");
    let iqr = q3 - q1;
    let (lower, upper) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    for (&i, &d) in valid.iter().zip(&dist) {
        if d < lower || d > upper {
            out.status[i] = SampleStatus::OutlierStep1;
            out.n_outliers_step1 += 1;
        } else if d > abs_limit_deg {
            out.status[i] = SampleStatus::OutlierStep2;
            out.n_outliers_step2 += 1;
        }
    }
    out.screening = Some(Screening {
        centroid,
        lower_fence: lower,
        upper_fence: upper,
        abs_limit_deg,
    });
    out.low_n = out.kept_count() < LOW_N_THRESHOLD;
    out
}

/// Percent of valid window samples removed by each screening step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierStats {
    pub step1_mean_pct: f64,
    pub step1_sd_pct: f64,
    pub step2_mean_pct: f64,
    pub step2_sd_pct: f64,
    pub n_segments: usize,
}

/// Mean and sample SD across fixations of the per-fixation removal percentages.
///
/// Fixations without valid samples are ignored; with a single fixation the SD is 0.
pub fn outlier_statistics(segments: &[FixationSegment]) -> OutlierStats {
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for s in segments {
        let valid = s.valid_count();
        if valid == 0 {
            continue;
        }
        p1.push(100.0 * s.n_outliers_step1 as f64 / valid as f64);
        p2.push(100.0 * s.n_outliers_step2 as f64 / valid as f64);
    }
    OutlierStats {
        step1_mean_pct: statkit::mean(&p1).unwrap_or(0.0),
        step1_sd_pct: statkit::sample_sd(&p1).unwrap_or(0.0),
        step2_mean_pct: statkit::mean(&p2).unwrap_or(0.0),
        step2_sd_pct: statkit::sample_sd(&p2).unwrap_or(0.0),
        n_segments: p1.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn target_signal() -> Vec<TargetStep> {
        let xs = [0.0, 10.0, -8.0, 4.0, -12.0, 6.0, 13.0, -3.0];
        xs.iter()
            .enumerate()
            .map(|(k, &x)| TargetStep::new(200.0 + 1000.0 * k as f64, x, -x / 2.0))
            .collect()
    }

    /// Gaze that follows the held target `delay` samples late.
    fn delayed(delay: usize, offset: (f64, f64)) -> GazeChannel {
        let target = target_signal();
        let n = 2400;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * 4.0;
                let src = i as f64 * 4.0 - delay as f64 * 4.0;
                let (x, y) = step_at(&target, src).map_or((0.0, 0.0), |k| target[k].position());
                GazeSample::new(t, x + offset.0, y + offset.1)
            })
            .collect();
        GazeChannel::new(Eye::Binocular, samples).unwrap()
    }

    #[test]
    fn recovers_exact_delay() {
        let est = estimate_latency(&delayed(48, (0.0, 0.0)), &target_signal(), 200).unwrap();
        assert_eq!(est.shift_samples, 48);
        assert_eq!(est.shift_ms, 192.0);
    }

    #[test]
    fn zero_delay_picks_smallest_shift() {
        let est = estimate_latency(&delayed(0, (0.0, 0.0)), &target_signal(), 200).unwrap();
        assert_eq!(est.shift_samples, 1);
        let d1 = est.distance_curve[0].1;
        assert!(est.distance_curve.iter().all(|&(_, d)| d1 <= d));
    }

    #[test]
    fn latency_requires_data() {
        let ch = delayed(5, (0.0, 0.0));
        assert!(estimate_latency(&ch, &target_signal()[..1], 200).is_err());
        assert!(estimate_latency(&ch, &target_signal(), 5000).is_err());
    }

    #[test]
    fn latency_invariant_to_common_offset() {
        let base = estimate_latency(&delayed(30, (0.0, 0.0)), &target_signal(), 100).unwrap();
        let moved: Vec<TargetStep> = target_signal()
            .into_iter()
            .map(|s| TargetStep {
                x_deg: s.x_deg + 3.0,
                y_deg: s.y_deg - 2.0,
                ..s
            })
            .collect();
        let shifted = estimate_latency(&delayed(30, (3.0, -2.0)), &moved, 100).unwrap();
        assert_eq!(base.shift_samples, shifted.shift_samples);
        for (a, b) in base.distance_curve.iter().zip(&shifted.distance_curve) {
            assert!((a.1 - b.1).abs() < 1e-9);
        }
    }

    fn seg_from(points: &[(f64, f64)]) -> FixationSegment {
        let samples: Vec<GazeSample> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| GazeSample::new(i as f64 * 4.0, x, y))
            .collect();
        FixationSegment::new(0, TargetStep::new(0.0, 0.0, 0.0), samples.clone(), samples)
    }

    #[test]
    fn identical_samples_keep_everything() {
        let s = remove_outliers(&seg_from(&[(0.4, -0.2); 50]), 2.0);
        assert_eq!(s.n_outliers_step1 + s.n_outliers_step2, 0);
        assert_eq!(s.kept_count(), 50);
    }

    #[test]
    fn far_sample_removed_in_step1() {
        let mut pts = vec![(0.0, 0.0); 99];
        pts.push((10.0, 0.0));
        let s = remove_outliers(&seg_from(&pts), 2.0);
        assert_eq!(s.n_outliers_step1, 1);
        assert_eq!(s.n_outliers_step2, 0);
        assert_eq!(s.status[99], SampleStatus::OutlierStep1);
    }

    #[test]
    fn ring_inside_limit_survives_step2() {
        let pts: Vec<(f64, f64)> = (0..64)
            .map(|i| {
                let a = i as f64 / 64.0 * std::f64::consts::TAU;
                (1.9 * a.cos(), 1.9 * a.sin())
            })
            .collect();
        let s = remove_outliers(&seg_from(&pts), 2.0);
        assert_eq!(s.n_outliers_step2, 0);
    }

    #[test]
    fn step2_uses_original_centroid() {
        // A wide cloud: nothing outside the fences, but the outer ring exceeds 2°.
        let mut pts = Vec::new();
        for r in [0.5, 1.0, 1.5, 2.5] {
            for i in 0..8 {
                let a = i as f64 / 8.0 * std::f64::consts::TAU;
                pts.push((r * a.cos(), r * a.sin()));
            }
        }
        let s = remove_outliers(&seg_from(&pts), 2.0);
        assert_eq!(s.n_outliers_step1, 0);
        assert_eq!(s.n_outliers_step2, 8);
    }

    #[test]
    fn too_few_samples_are_flagged() {
        let s = remove_outliers(&seg_from(&[(0.0, 0.0), (5.0, 5.0), (0.1, 0.0)]), 2.0);
        assert!(s.unscreened && s.low_n);
        assert_eq!(s.kept_count(), 3);
    }

    #[test]
    fn statistics_examples() {
        let clean = outlier_statistics(&[seg_from(&[(0.0, 0.0); 20])]);
        assert_eq!((clean.step1_mean_pct, clean.step1_sd_pct), (0.0, 0.0));
        let mut s = seg_from(&[(0.0, 0.0); 100]);
        s.n_outliers_step1 = 4;
        assert_eq!(outlier_statistics(&[s]).step1_mean_pct, 4.0);
    }

    fn stepped_channel() -> (GazeChannel, Vec<TargetStep>) {
        let targets = vec![
            TargetStep::new(0.0, 1.0, 1.0),
            TargetStep::new(1200.0, -5.0, 2.0),
            TargetStep::new(2200.0, 3.0, -4.0),
        ];
        let samples = (0..700)
            .map(|i| GazeSample::new(i as f64 * 4.0, 0.0, 0.0))
            .collect();
        (GazeChannel::new(Eye::Binocular, samples).unwrap(), targets)
    }

    #[test]
    fn segmentation_windows() {
        let (ch, targets) = stepped_channel();
        let segs = segment_aligned(&ch, &targets, WindowSpec::default());
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[0].samples.len(), 125);
        assert_eq!(segs[0].all_samples.len(), 300);
        // Second step lasts 1000 ms: window 1600..2100 ms.
        assert_eq!(segs[1].samples.first().unwrap().timestamp_ms, 1600.0);
        assert_eq!(segs[1].samples.len(), 125);
        // Last step runs to the end of the data at 2796 ms: window truncated.
        assert_eq!(segs[2].samples.len(), 50);
    }

    #[test]
    fn short_step_truncates_window() {
        let targets = vec![
            TargetStep::new(0.0, 0.0, 0.0),
            TargetStep::new(600.0, 5.0, 0.0),
        ];
        let samples = (0..400)
            .map(|i| GazeSample::new(i as f64 * 4.0, 0.0, 0.0))
            .collect();
        let ch = GazeChannel::new(Eye::Binocular, samples).unwrap();
        let segs = segment_aligned(&ch, &targets, WindowSpec::default());
        assert_eq!(segs[0].samples.len(), 50);
    }

    #[test]
    fn binocular_targets_are_raw() {
        let t = target_signal();
        assert_eq!(targets_for_eye(&t, Eye::Binocular, 62.0).unwrap(), t);
        assert_ne!(targets_for_eye(&t, Eye::Left, 62.0).unwrap(), t);
    }

    #[test]
    fn align_moves_positions_earlier() {
        let ch = delayed(10, (0.0, 0.0));
        let a = align_channel(&ch, 10);
        assert_eq!(a.len(), ch.len() - 10);
        assert_eq!(a.samples()[5].timestamp_ms, ch.samples()[5].timestamp_ms);
        assert_eq!(a.samples()[5].x_deg, ch.samples()[15].x_deg);
    }

    proptest! {
        #[test]
        fn screening_accounts_for_every_sample(
            pts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0, proptest::bool::weighted(0.9)), 0..80)
        ) {
            let samples: Vec<GazeSample> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y, v))| if v { GazeSample::new(i as f64, x, y) } else { GazeSample::invalid(i as f64) })
                .collect();
            let seg = FixationSegment::new(0, TargetStep::new(0.0, 0.0, 0.0), samples.clone(), samples);
            let once = remove_outliers(&seg, 2.0);
            prop_assert_eq!(
                once.kept_count() + once.n_outliers_step1 + once.n_outliers_step2 + once.invalid_count(),
                once.samples.len()
            );
            let twice = remove_outliers(&once, 2.0);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn segments_are_ordered_and_disjoint(onsets in proptest::collection::btree_set(0u32..2700, 1..8)) {
            let (ch, _) = stepped_channel();
            let targets: Vec<TargetStep> = onsets.iter().map(|&o| TargetStep::new(o as f64, 0.0, 0.0)).collect();
            let segs = segment_aligned(&ch, &targets, WindowSpec::default());
            prop_assert_eq!(segs.len(), targets.len());
            let mut last = f64::NEG_INFINITY;
            for (seg, step) in segs.iter().zip(&targets) {
                for s in &seg.all_samples {
                    prop_assert!(s.timestamp_ms >= step.onset_ms && s.timestamp_ms > last);
                    last = s.timestamp_ms;
                }
            }
        }
    }
}
