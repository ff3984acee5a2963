//! Quality reports and their JSON and CSV encodings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    AccuracyResult, CrosstalkResult, LinearityResult, PrecisionResult, TemporalResult,
};
use crate::preprocess::{FixationSegment, OutlierStats};
use crate::recalibration::{CalibrationKind, CalibrationMap};
use crate::statkit;
use crate::types::{Device, Eye};

pub const SCHEMA_VERSION: u32 = 1;

/// Serde adapter writing non-finite floats as the strings `inf`, `-inf` and `nan`.
pub mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Repr {
        Num(f64),
        Text(String),
    }

    impl Repr {
        pub(crate) fn value<E: serde::de::Error>(self) -> Result<f64, E> {
            match self {
                Repr::Num(v) => Ok(v),
                Repr::Text(s) => match s.as_str() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(E::custom(format!("expected a number, found `{other}`"))),
                },
            }
        }
    }

    pub(crate) fn text(v: f64) -> Option<&'static str> {
        if v.is_nan() {
            Some("nan")
        } else if v == f64::INFINITY {
            Some("inf")
        } else if v == f64::NEG_INFINITY {
            Some("-inf")
        } else {
            None
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match text(*v) {
            Some(t) => s.serialize_str(t),
            None => s.serialize_f64(*v),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Repr::deserialize(d)?.value()
    }
}

/// [`nonfinite`] for a sequence of floats.
pub mod nonfinite_vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::nonfinite::{text, Repr};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            match text(*x) {
                Some(t) => seq.serialize_element(t)?,
                None => seq.serialize_element(x)?,
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(Repr::value)
            .collect()
    }
}

/// Which recalibration, if any, preceded the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    None,
    Usc1,
    Usc2,
}

impl CalibrationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CalibrationMode::None => "none",
            CalibrationMode::Usc1 => "usc1",
            CalibrationMode::Usc2 => "usc2",
        }
    }

    pub fn kind(&self) -> Option<CalibrationKind> {
        match self {
            CalibrationMode::None => None,
            CalibrationMode::Usc1 => Some(CalibrationKind::Usc1),
            CalibrationMode::Usc2 => Some(CalibrationKind::Usc2),
        }
    }
}

impl std::fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub shift_samples: usize,
    pub shift_ms: f64,
}

/// Per-fixation detail for plotting and auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationRow {
    pub index: usize,
    pub target_x_deg: f64,
    pub target_y_deg: f64,
    pub n_window: usize,
    pub n_invalid: usize,
    pub n_kept: usize,
    pub n_outliers_step1: usize,
    pub n_outliers_step2: usize,
    pub low_n: bool,
    pub accuracy: Option<AccuracyResult>,
    pub precision: Option<PrecisionResult>,
}

impl FixationRow {
    pub fn from_segment(seg: &FixationSegment) -> Self {
        Self {
            index: seg.index,
            target_x_deg: seg.target.x_deg,
            target_y_deg: seg.target.y_deg,
            n_window: seg.samples.len(),
            n_invalid: seg.invalid_count(),
            n_kept: seg.kept_count(),
            n_outliers_step1: seg.n_outliers_step1,
            n_outliers_step2: seg.n_outliers_step2,
            low_n: seg.low_n,
            accuracy: crate::metrics::spatial_accuracy(seg).ok(),
            precision: crate::metrics::spatial_precision(seg).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeReport {
    pub eye: Eye,
    pub calibration: CalibrationMode,
    pub latency: LatencySummary,
    pub accuracy: Option<AccuracyResult>,
    pub precision: Option<PrecisionResult>,
    pub linearity: Vec<LinearityResult>,
    pub crosstalk: Vec<CrosstalkResult>,
    pub outliers: OutlierStats,
    pub calibration_map: Option<CalibrationMap>,
    pub fixations: Vec<FixationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub schema: u32,
    pub subject_id: String,
    pub device: Device,
    pub nominal_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub temporal: Option<TemporalResult>,
    pub eyes: Vec<EyeReport>,
    pub warnings: Vec<String>,
}

impl QualityReport {
    pub fn new(subject_id: impl Into<String>, device: Device, nominal_rate_hz: f64) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            subject_id: subject_id.into(),
            device,
            nominal_rate_hz,
            generated_at: None,
            temporal: None,
            eyes: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn eye(&self, eye: Eye, calibration: CalibrationMode) -> Option<&EyeReport> {
        self.eyes
            .iter()
            .find(|e| e.eye == eye && e.calibration == calibration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn save_report(report: &QualityReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => to_json(report).into_bytes(),
        ReportFormat::Csv => to_csv(std::slice::from_ref(report)).into_bytes(),
    }
}

pub fn to_json(report: &QualityReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<QualityReport> {
    let report: QualityReport =
        serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
    if report.schema != SCHEMA_VERSION {
        return Err(Error::Report(format!(
            "unsupported schema version {}",
            report.schema
        )));
    }
    Ok(report)
}

pub const CSV_HEADER: &str = "subject_id,eye,calibration,metric,dimension,value";

/// One flattened report value.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub eye: String,
    pub calibration: CalibrationMode,
    pub metric: &'static str,
    pub dimension: &'static str,
    pub value: MetricValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Number(f64),
    Label(&'static str),
}

impl std::fmt::Display for MetricValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricValue::Number(v) => match nonfinite::text(*v) {
                Some(t) => f.write_str(t),
                None => write!(f, "{v}"),
            },
            MetricValue::Label(s) => f.write_str(s),
        }
    }
}

/// Flattens a report in a fixed order: temporal, then each eye block as stored.
pub fn metric_rows(report: &QualityReport) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    let num = |eye: &str, cal, metric, dimension, v: f64| MetricRow {
        eye: eye.to_string(),
        calibration: cal,
        metric,
        dimension,
        value: MetricValue::Number(v),
    };
    if let Some(t) = &report.temporal {
        let c = CalibrationMode::None;
        rows.push(num("all", c, "isi_mean_ms", "-", t.isi_mean_ms));
        rows.push(num("all", c, "isi_sd_ms", "-", t.isi_sd_ms));
        rows.push(num(
            "all",
            c,
            "dropped_samples",
            "-",
            t.dropped.len() as f64,
        ));
        rows.push(num("all", c, "short_isis", "-", t.short.len() as f64));
    }
    for e in &report.eyes {
        let eye = e.eye.as_str();
        let c = e.calibration;
        rows.push(num(eye, c, "latency_ms", "-", e.latency.shift_ms));
        if let Some(a) = e.accuracy {
            rows.push(num(eye, c, "accuracy", "H", a.theta_h));
            rows.push(num(eye, c, "accuracy", "V", a.theta_v));
            rows.push(num(eye, c, "accuracy", "C", a.theta_c));
        }
        if let Some(p) = e.precision {
            rows.push(num(eye, c, "precision", "H", p.mad_h));
            rows.push(num(eye, c, "precision", "V", p.mad_v));
            rows.push(num(eye, c, "precision", "C", p.mad_c));
        }
        for l in &e.linearity {
            let d = l.dimension.as_str();
            rows.push(num(eye, c, "linearity_slope", d, l.slope));
            rows.push(num(eye, c, "linearity_intercept", d, l.intercept));
            rows.push(num(eye, c, "linearity_slope_ci_lo", d, l.slope_ci95.0));
            rows.push(num(eye, c, "linearity_slope_ci_hi", d, l.slope_ci95.1));
            rows.push(num(eye, c, "linearity_r2", d, l.r2));
        }
        for x in &e.crosstalk {
            let d = x.direction.as_str();
            rows.push(MetricRow {
                eye: eye.to_string(),
                calibration: c,
                metric: "crosstalk_model",
                dimension: d,
                value: MetricValue::Label(x.chosen_model.as_str()),
            });
            rows.push(num(
                eye,
                c,
                "crosstalk_intercept",
                d,
                x.coefficients.intercept,
            ));
            rows.push(num(eye, c, "crosstalk_linear", d, x.coefficients.linear));
            rows.push(num(
                eye,
                c,
                "crosstalk_quadratic",
                d,
                x.coefficients.quadratic,
            ));
        }
        rows.push(num(
            eye,
            c,
            "outliers_step1_pct",
            "-",
            e.outliers.step1_mean_pct,
        ));
        rows.push(num(
            eye,
            c,
            "outliers_step2_pct",
            "-",
            e.outliers.step2_mean_pct,
        ));
    }
    rows
}

/// Long-format CSV with one row per (eye, calibration, metric, dimension).
pub fn to_csv(reports: &[QualityReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for row in metric_rows(r) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.subject_id),
                row.eye,
                row.calibration,
                row.metric,
                row.dimension,
                row.value
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Mean and SD of one metric across recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub eye: String,
    pub calibration: CalibrationMode,
    pub metric: String,
    pub dimension: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Groups numeric report values across recordings, keeping first-seen order.
pub fn summarize(reports: &[QualityReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, CalibrationMode, &'static str, &'static str)> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in reports {
        for row in metric_rows(r) {
            let MetricValue::Number(v) = row.value else {
                continue;
            };
            let key = (row.eye, row.calibration, row.metric, row.dimension);
            match keys.iter().position(|k| *k == key) {
                Some(i) => values[i].push(v),
                None => {
                    keys.push(key);
                    values.push(vec![v]);
                }
            }
        }
    }
    keys.into_iter()
        .zip(values)
        .map(|((eye, calibration, metric, dimension), v)| SummaryRow {
            eye,
            calibration,
            metric: metric.to_string(),
            dimension: dimension.to_string(),
            mean: statkit::mean(&v).unwrap_or(f64::NAN),
            sd: statkit::sample_sd(&v).unwrap_or(0.0),
            n: v.len(),
        })
        .collect()
}

/// Plain-text `mean ± SD` table of the summary rows.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<10} {:<6} {:<24} {:<4} {:>24} {:>4}\n",
        "eye", "calib", "metric", "dim", "mean ± SD", "n"
    );
    for r in rows {
        let cell = format!("{:.3} ± {:.3}", r.mean, r.sd);
        let _ = writeln!(
            out,
            "{:<10} {:<6} {:<24} {:<4} {:>24} {:>4}",
            r.eye, r.calibration, r.metric, r.dimension, cell, r.n
        );
    }
    out
}
