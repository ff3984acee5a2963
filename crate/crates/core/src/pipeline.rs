//! End-to-end assessment of one recording.
//!
//! Per eye the latency is estimated once on the uncorrected channel. Each
//! calibration mode then fits its map on the calibration prefix, applies it to
//! the whole channel, aligns by the same shift, segments, screens outliers and
//! computes metrics over the task steps only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SpectralOverride;
use crate::metrics::{self, Aggregation, DEFAULT_DROP_MS, DEFAULT_SHORT_MS};
use crate::preprocess::{
    align_channel, estimate_latency, outlier_statistics, remove_outliers, segment_aligned,
    targets_for_eye, FixationSegment, LatencyEstimate, WindowSpec, DEFAULT_ABS_LIMIT_DEG,
    DEFAULT_MAX_SHIFT,
};
use crate::recalibration::{
    apply_calibration, fit_calibration, select_stable_bins, CalibrationMap,
    DEFAULT_BINS_PER_FIXATION, DEFAULT_BIN_SIZE,
};
use crate::report::{CalibrationMode, EyeReport, FixationRow, LatencySummary, QualityReport};
use crate::spectral::{self, FilterEstimate, FilterOptions, SegmentChoice, SpectrumSet};
use crate::types::{Dimension, Eye, GazeChannel, GazeRecording};

/// Tunables for [`assess_recording`]; defaults are the standard task values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssessOptions {
    /// Eyes to analyse; empty means every stored channel plus the version
    /// signal when both eyes are present.
    pub eyes: Vec<Eye>,
    pub calibration: Vec<CalibrationMode>,
    pub window: WindowSpec,
    pub max_shift: usize,
    pub abs_limit_deg: f64,
    pub bin_size: usize,
    pub bins_per_fixation: usize,
    pub drop_ms: f64,
    pub short_ms: f64,
    pub aggregation: Aggregation,
    /// Keep per-fixation rows in the report.
    pub fixations: bool,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self {
            eyes: Vec::new(),
            calibration: vec![CalibrationMode::None],
            window: WindowSpec::default(),
            max_shift: DEFAULT_MAX_SHIFT,
            abs_limit_deg: DEFAULT_ABS_LIMIT_DEG,
            bin_size: DEFAULT_BIN_SIZE,
            bins_per_fixation: DEFAULT_BINS_PER_FIXATION,
            drop_ms: DEFAULT_DROP_MS,
            short_ms: DEFAULT_SHORT_MS,
            aggregation: Aggregation::Mean,
            fixations: true,
        }
    }
}

impl AssessOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if !(self.window.discard_ms >= 0.0 && self.window.use_ms > 0.0) {
            return bad("window discard must be non-negative and use positive");
        }
        if self.max_shift == 0 {
            return bad("max_shift must be at least 1");
        }
        if !(self.abs_limit_deg > 0.0) {
            return bad("abs_limit_deg must be positive");
        }
        if self.bin_size == 0 || self.bins_per_fixation == 0 {
            return bad("bin_size and bins_per_fixation must be positive");
        }
        if !(self.drop_ms > self.short_ms && self.short_ms >= 0.0) {
            return bad("drop_ms must exceed short_ms, which must be non-negative");
        }
        if self.calibration.is_empty() {
            return bad("at least one calibration mode is required");
        }
        Ok(())
    }
}

fn eyes_to_analyse(recording: &GazeRecording, requested: &[Eye]) -> Vec<Eye> {
    if !requested.is_empty() {
        let mut eyes = requested.to_vec();
        eyes.sort();
        eyes.dedup();
        return eyes;
    }
    let mut eyes: Vec<Eye> = recording.eyes().collect();
    if recording.channel(Eye::Left).is_some() && recording.channel(Eye::Right).is_some() {
        eyes.push(Eye::Version);
    }
    eyes
}

fn screened(
    channel: &GazeChannel,
    targets: &[crate::types::TargetStep],
    opts: &AssessOptions,
    first: usize,
) -> Vec<FixationSegment> {
    segment_aligned(channel, targets, opts.window)
        .into_iter()
        .filter(|s| s.index >= first)
        .map(|s| remove_outliers(&s, opts.abs_limit_deg))
        .collect()
}

fn fit_map(
    aligned: &GazeChannel,
    targets: &[crate::types::TargetStep],
    calibration_steps: usize,
    mode: CalibrationMode,
    opts: &AssessOptions,
) -> Result<Option<CalibrationMap>> {
    let Some(kind) = mode.kind() else {
        return Ok(None);
    };
    if calibration_steps == 0 {
        return Err(Error::InsufficientData(
            "recording has no calibration prefix".into(),
        ));
    }
    // Segment against the full sequence: the last prefix step ends at the
    // first task onset, not at the end of the recording.
    let segments: Vec<FixationSegment> = segment_aligned(aligned, targets, opts.window)
        .into_iter()
        .filter(|s| s.index < calibration_steps)
        .collect();
    let bins = select_stable_bins(&segments, opts.bin_size, opts.bins_per_fixation);
    fit_calibration(&bins.bins, kind).map(Some)
}

fn eye_report(
    recording: &GazeRecording,
    eye: Eye,
    latency: &LatencyEstimate,
    mode: CalibrationMode,
    opts: &AssessOptions,
    warnings: &mut Vec<String>,
) -> Result<EyeReport> {
    let subject = recording.subject_id();
    let channel = recording.channel_or_derived(eye)?;
    let targets = targets_for_eye(recording.target(), eye, recording.ipd_mm())?;
    let cal = recording.calibration_steps();
    let raw_aligned = align_channel(&channel, latency.shift_samples);
    let map = fit_map(&raw_aligned, &targets, cal, mode, opts)?;
    let aligned = match &map {
        Some(m) => align_channel(&apply_calibration(&channel, m), latency.shift_samples),
        None => raw_aligned,
    };
    let segments = screened(&aligned, &targets, opts, cal);
    let empty = segments.iter().filter(|s| s.empty).count();
    if empty > 0 {
        warnings.push(format!(
            "{subject}/{eye}/{mode}: {empty} fixation(s) without valid samples"
        ));
    }
    let low = segments.iter().filter(|s| s.low_n && !s.empty).count();
    if low > 0 {
        warnings.push(format!(
            "{subject}/{eye}/{mode}: {low} fixation(s) with fewer than 10 kept samples"
        ));
    }
    let mut note = |what: &str, r: Result<()>| {
        if let Err(e) = r {
            warnings.push(format!("{subject}/{eye}/{mode}: {what}: {e}"));
        }
    };
    let accuracy = metrics::recording_accuracy(&segments, opts.aggregation);
    let precision = metrics::recording_precision(&segments, opts.aggregation);
    let mut linearity = Vec::new();
    let mut crosstalk = Vec::new();
    for dim in [Dimension::Horizontal, Dimension::Vertical] {
        note(
            "linearity",
            metrics::linearity(&segments, dim).map(|r| linearity.push(r)),
        );
        note(
            "crosstalk",
            metrics::crosstalk(&segments, dim).map(|r| crosstalk.push(r)),
        );
    }
    let accuracy = accuracy.map_err(|e| note("accuracy", Err(e))).ok();
    let precision = precision.map_err(|e| note("precision", Err(e))).ok();
    Ok(EyeReport {
        eye,
        calibration: mode,
        latency: LatencySummary {
            shift_samples: latency.shift_samples,
            shift_ms: latency.shift_ms,
        },
        accuracy,
        precision,
        linearity,
        crosstalk,
        outliers: outlier_statistics(&segments),
        calibration_map: map,
        fixations: if opts.fixations {
            segments.iter().map(FixationRow::from_segment).collect()
        } else {
            Vec::new()
        },
    })
}

/// Runs the full pipeline on one recording.
///
/// Per-eye failures become warnings; the call fails only when no eye yields a
/// report or the options are invalid.
pub fn assess_recording(recording: &GazeRecording, opts: &AssessOptions) -> Result<QualityReport> {
    opts.validate()?;
    let mut report = QualityReport::new(
        recording.subject_id(),
        recording.device(),
        recording.nominal_rate_hz(),
    );
    let first = recording
        .channels()
        .next()
        .expect("recordings hold at least one channel");
    match metrics::temporal_precision(first, opts.drop_ms, opts.short_ms) {
        Ok(t) => {
            if !t.dropped.is_empty() {
                report.warnings.push(format!(
                    "{}: {} dropped frame(s)",
                    recording.subject_id(),
                    t.dropped.len()
                ));
            }
            report.temporal = Some(t);
        }
        Err(e) => report.warnings.push(format!(
            "{}: temporal precision: {e}",
            recording.subject_id()
        )),
    }
    let mut last_error = None;
    for eye in eyes_to_analyse(recording, &opts.eyes) {
        let channel = match recording.channel_or_derived(eye) {
            Ok(c) => c,
            Err(e) => {
                report
                    .warnings
                    .push(format!("{}/{eye}: {e}", recording.subject_id()));
                last_error = Some(e);
                continue;
            }
        };
        let targets = targets_for_eye(recording.target(), eye, recording.ipd_mm())?;
        let latency = match estimate_latency(&channel, &targets, opts.max_shift) {
            Ok(l) => l,
            Err(e) => {
                report
                    .warnings
                    .push(format!("{}/{eye}: latency: {e}", recording.subject_id()));
                last_error = Some(e);
                continue;
            }
        };
        log::debug!(
            "{}/{eye}: latency {} samples",
            recording.subject_id(),
            latency.shift_samples
        );
        for &mode in &opts.calibration {
            let mut warnings = Vec::new();
            match eye_report(recording, eye, &latency, mode, opts, &mut warnings) {
                Ok(r) => report.eyes.push(r),
                Err(e) => {
                    warnings.push(format!("{}/{eye}/{mode}: {e}", recording.subject_id()));
                    last_error = Some(e);
                }
            }
            report.warnings.extend(warnings);
        }
    }
    if report.eyes.is_empty() {
        return Err(match last_error {
            Some(e @ Error::InsufficientData(_)) => e,
            Some(e) => Error::InsufficientData(format!("no eye could be assessed: {e}")),
            None => Error::InsufficientData("no eye could be assessed".into()),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    pub dimension: Dimension,
    /// Time after onset before a segment may start.
    pub settle_ms: f64,
    pub segments_per_recording: usize,
    pub max_shift: usize,
    pub filter: FilterOptions,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            dimension: Dimension::Horizontal,
            settle_ms: 100.0,
            segments_per_recording: 3,
            max_shift: DEFAULT_MAX_SHIFT,
            filter: FilterOptions::default(),
        }
    }
}

/// Aligned 256-sample stretches of every channel, keyed by eye.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSegments {
    pub subject_id: String,
    pub rate_hz: f64,
    pub dimension: Dimension,
    pub choices: Vec<SegmentChoice>,
    pub segments: BTreeMap<Eye, Vec<Vec<f64>>>,
}

/// Picks and extracts spectral segments from one recording.
///
/// Every channel is aligned by its own latency. The binocular channel's filter
/// delay is thereby mostly removed, which keeps the estimated impulse response
/// short and centred on lag zero.
pub fn spectral_segments(
    recording: &GazeRecording,
    opts: &SpectrumOptions,
    manual: Option<&SpectralOverride>,
) -> Result<SpectralSegments> {
    let dim = manual.and_then(|m| m.dimension).unwrap_or(opts.dimension);
    let mut aligned: BTreeMap<Eye, GazeChannel> = BTreeMap::new();
    for eye in [Eye::Left, Eye::Right, Eye::Binocular, Eye::Version] {
        if eye != Eye::Version && recording.channel(eye).is_none() {
            continue;
        }
        let channel = recording.channel_or_derived(eye)?;
        let targets = targets_for_eye(recording.target(), eye, recording.ipd_mm())?;
        let latency = estimate_latency(&channel, &targets, opts.max_shift)?;
        aligned.insert(eye, align_channel(&channel, latency.shift_samples));
    }
    let choices = match manual.filter(|m| !m.segments.is_empty()) {
        Some(m) => m
            .segments
            .iter()
            .map(|&start| SegmentChoice {
                step: usize::MAX,
                start,
                dispersion: f64::NAN,
            })
            .collect(),
        None => {
            let others: Vec<&GazeChannel> = aligned
                .iter()
                .filter(|(e, _)| **e != Eye::Version)
                .map(|(_, c)| c)
                .collect();
            spectral::select_segments(
                &aligned[&Eye::Version],
                &others,
                recording.target(),
                opts.settle_ms,
                opts.segments_per_recording,
            )
        }
    };
    if choices.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no valid {}-sample fixation segment",
            recording.subject_id(),
            spectral::SEGMENT_LEN
        )));
    }
    let mut segments = BTreeMap::new();
    for (&eye, channel) in &aligned {
        let segs = choices
            .iter()
            .map(|c| spectral::extract_segment(channel, c.start, dim))
            .collect::<Result<Vec<_>>>()?;
        segments.insert(eye, segs);
    }
    Ok(SpectralSegments {
        subject_id: recording.subject_id().to_string(),
        rate_hz: recording.nominal_rate_hz(),
        dimension: dim,
        choices,
        segments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub dimension: Dimension,
    pub spectra: SpectrumSet,
    /// Present when both the binocular and version signals are available.
    pub filter: Option<FilterEstimate>,
}

/// Averages spectra over segments pooled from several recordings and
/// estimates the version-to-binocular filter.
pub fn analyze_spectra(
    pooled: &[SpectralSegments],
    opts: &SpectrumOptions,
) -> Result<SpectrumReport> {
    let first = pooled
        .first()
        .ok_or_else(|| Error::InsufficientData("no spectral segments".into()))?;
    let rate = first.rate_hz;
    if pooled.iter().any(|p| p.rate_hz != rate) {
        return Err(Error::ConfigInvalid(
            "recordings with different sampling rates cannot be pooled".into(),
        ));
    }
    let mut all: BTreeMap<Eye, Vec<Vec<f64>>> = BTreeMap::new();
    for p in pooled {
        for (&eye, segs) in &p.segments {
            all.entry(eye).or_default().extend(segs.iter().cloned());
        }
    }
    let n = all.values().map(Vec::len).max().unwrap_or(0);
    all.retain(|_, v| v.len() == n);
    let spectra = SpectrumSet::from_segments(&all, rate)?;
    let filter = match (all.get(&Eye::Version), all.get(&Eye::Binocular)) {
        (Some(v), Some(b)) => {
            let pairs: Vec<(Vec<f64>, Vec<f64>)> =
                v.iter().cloned().zip(b.iter().cloned()).collect();
            Some(spectral::estimate_filter(&pairs, rate, opts.filter)?)
        }
        _ => None,
    };
    Ok(SpectrumReport {
        dimension: first.dimension,
        spectra,
        filter,
    })
}
