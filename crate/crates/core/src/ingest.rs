//! Reading and writing recordings in the flat CSV layout.
//!
//! A recording is a TOML manifest pointing at two CSV files. The gaze file has a
//! timestamp column (`t_ns` integer nanoseconds or `t_ms` real milliseconds)
//! followed by `x, y, v` triples for each channel present, prefixed `l`, `r` or
//! `b`; `v` is a 0/1 validity flag. The target file has the columns
//! `onset_ms, x_deg, y_deg[, depth_mm]`.
//!
//! ```toml
//! subject_id = "s01"
//! device = "ethmd"
//! nominal_rate_hz = 250.0
//! ipd_mm = 62.0
//! gaze_file = "gaze.csv"
//! target_file = "target.csv"
//! timestamp_unit = "ns"
//! channels = ["left", "right", "binocular"]
//! calibration_steps = 13
//!
//! [offsets.binocular]
//! dy = 1.2
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::apply_static_offset;
use crate::types::{
    Device, Dimension, Eye, GazeChannel, GazeRecording, GazeSample, TargetStep, DEFAULT_IPD_MM,
};

pub use crate::report::{from_json as load_report, save_report, ReportFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimestampUnit {
    #[default]
    Ns,
    Ms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StaticOffset {
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
}

/// Manual choice of spectral segments, overriding automatic selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SpectralOverride {
    /// Start indices into the latency-aligned signal.
    #[serde(default)]
    pub segments: Vec<usize>,
    #[serde(default)]
    pub dimension: Option<Dimension>,
}

fn default_ipd() -> f64 {
    DEFAULT_IPD_MM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingManifest {
    /// Location of the manifest itself; data paths are relative to its directory.
    #[serde(skip)]
    pub path: PathBuf,
    pub subject_id: String,
    #[serde(default)]
    pub device: Device,
    pub nominal_rate_hz: f64,
    #[serde(default = "default_ipd")]
    pub ipd_mm: f64,
    pub gaze_file: PathBuf,
    pub target_file: PathBuf,
    #[serde(default)]
    pub timestamp_unit: TimestampUnit,
    pub channels: Vec<Eye>,
    #[serde(default)]
    pub calibration_steps: usize,
    #[serde(default)]
    pub offsets: BTreeMap<Eye, StaticOffset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralOverride>,
}

impl RecordingManifest {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        let mut m: RecordingManifest = toml::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            reason: e.message().to_string(),
        })?;
        m.path = path.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::Manifest {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(self.invalid("no channels listed"));
        }
        if let Some(eye) = self.channels.iter().find(|e| **e == Eye::Version) {
            return Err(self.invalid(format!("`{eye}` is derived and cannot be stored")));
        }
        let mut seen = self.channels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.channels.len() {
            return Err(self.invalid("duplicate channel"));
        }
        if !(self.nominal_rate_hz > 0.0) {
            return Err(self.invalid("nominal_rate_hz must be positive"));
        }
        if !(self.ipd_mm >= 0.0) {
            return Err(self.invalid("ipd_mm must be non-negative"));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match self.path.parent() {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn gaze_path(&self) -> PathBuf {
        self.resolve(&self.gaze_file)
    }

    pub fn target_path(&self) -> PathBuf {
        self.resolve(&self.target_file)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Manifest {
                path: path.to_path_buf(),
                reason: "file not found".into(),
            }
        } else {
            Error::io(path, e)
        }
    })
}

fn prefix(eye: Eye) -> &'static str {
    match eye {
        Eye::Left => "l",
        Eye::Right => "r",
        Eye::Binocular => "b",
        Eye::Version => "v",
    }
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len,
            len,
            pos,
        } => Error::ChannelLengthMismatch {
            line: pos.map_or(line, |p| p.line()),
            expected: expected_len as usize,
            found: len as usize,
        },
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            column: String::new(),
            reason: format!("{other:?}"),
        },
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse {
            line: 1,
            column: name.to_string(),
            reason: "missing column".into(),
        })
}

fn parse_f64(field: &str, line: u64, name: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        column: name.to_string(),
        reason: format!("`{field}` is not a number"),
    })
}

fn parse_gaze(text: &str, path: &Path, manifest: &RecordingManifest) -> Result<Vec<GazeChannel>> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| csv_error(e, path))?.clone();
    let t_name = match manifest.timestamp_unit {
        TimestampUnit::Ns => "t_ns",
        TimestampUnit::Ms => "t_ms",
    };
    let t_col = column(&headers, t_name)?;
    let mut cols = Vec::new();
    for &eye in &manifest.channels {
        let p = prefix(eye);
        let names = [format!("{p}x"), format!("{p}y"), format!("{p}v")];
        cols.push((
            eye,
            [
                column(&headers, &names[0])?,
                column(&headers, &names[1])?,
                column(&headers, &names[2])?,
            ],
            names,
        ));
    }
    let mut samples: Vec<Vec<GazeSample>> = vec![Vec::new(); cols.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw_t = &rec[t_col];
        let t_ms = match manifest.timestamp_unit {
            TimestampUnit::Ns => {
                let ns: i64 = raw_t.parse().map_err(|_| Error::Parse {
                    line,
                    column: t_name.into(),
                    reason: format!("`{raw_t}` is not an integer nanosecond count"),
                })?;
                ns as f64 / 1e6
            }
            TimestampUnit::Ms => parse_f64(raw_t, line, t_name)?,
        };
        for ((_, idx, names), out) in cols.iter().zip(samples.iter_mut()) {
            let x = parse_f64(&rec[idx[0]], line, &names[0])?;
            let y = parse_f64(&rec[idx[1]], line, &names[1])?;
            let valid = match &rec[idx[2]] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        line,
                        column: names[2].clone(),
                        reason: format!("validity flag must be 0 or 1, found `{other}`"),
                    })
                }
            };
            out.push(if valid && x.is_finite() && y.is_finite() {
                GazeSample::new(t_ms, x, y)
            } else {
                GazeSample::invalid(t_ms)
            });
        }
    }
    cols.into_iter()
        .zip(samples)
        .map(|((eye, _, _), s)| GazeChannel::new(eye, s))
        .collect()
}

fn parse_targets(text: &str, path: &Path) -> Result<Vec<TargetStep>> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| csv_error(e, path))?.clone();
    let onset = column(&headers, "onset_ms")?;
    let x = column(&headers, "x_deg")?;
    let y = column(&headers, "y_deg")?;
    let depth = headers.iter().position(|h| h == "depth_mm");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut step = TargetStep::new(
            parse_f64(&rec[onset], line, "onset_ms")?,
            parse_f64(&rec[x], line, "x_deg")?,
            parse_f64(&rec[y], line, "y_deg")?,
        );
        if let Some(d) = depth {
            step.depth_mm = parse_f64(&rec[d], line, "depth_mm")?;
        }
        out.push(step);
    }
    Ok(out)
}

/// Loads the files a manifest refers to and applies its static offsets.
pub fn load_recording(manifest: &RecordingManifest) -> Result<GazeRecording> {
    let gaze_path = manifest.gaze_path();
    let target_path = manifest.target_path();
    let mut channels = parse_gaze(&read_to_string(&gaze_path)?, &gaze_path, manifest)?;
    for ch in channels.iter_mut() {
        if let Some(off) = manifest.offsets.get(&ch.eye()) {
            if off.dx != 0.0 || off.dy != 0.0 {
                *ch = apply_static_offset(ch, off.dx, off.dy);
            }
        }
    }
    let target = parse_targets(&read_to_string(&target_path)?, &target_path)?;
    GazeRecording::new(
        manifest.subject_id.clone(),
        manifest.device,
        manifest.nominal_rate_hz,
        manifest.ipd_mm,
        channels,
        target,
    )?
    .with_calibration_steps(manifest.calibration_steps)
}

/// Reads a manifest and the recording it describes.
pub fn load(path: impl AsRef<Path>) -> Result<(RecordingManifest, GazeRecording)> {
    let manifest = RecordingManifest::from_path(path)?;
    let recording = load_recording(&manifest)?;
    Ok((manifest, recording))
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// Renders the gaze CSV; nanosecond timestamps are rounded to whole ns.
pub fn gaze_csv(recording: &GazeRecording, unit: TimestampUnit) -> String {
    let channels: Vec<&GazeChannel> = recording.channels().collect();
    let mut out = String::from(match unit {
        TimestampUnit::Ns => "t_ns",
        TimestampUnit::Ms => "t_ms",
    });
    for ch in &channels {
        let p = prefix(ch.eye());
        let _ = write!(out, ",{p}x,{p}y,{p}v");
    }
    out.push('\n');
    for i in 0..recording.len() {
        let t = channels[0].samples()[i].timestamp_ms;
        match unit {
            TimestampUnit::Ns => {
                let _ = write!(out, "{}", (t * 1e6).round() as i64);
            }
            TimestampUnit::Ms => out.push_str(&fmt_value(t)),
        }
        for ch in &channels {
            let s = &ch.samples()[i];
            if s.valid {
                let _ = write!(out, ",{},{},1", fmt_value(s.x_deg), fmt_value(s.y_deg));
            } else {
                out.push_str(",NaN,NaN,0");
            }
        }
        out.push('\n');
    }
    out
}

pub fn target_csv(target: &[TargetStep]) -> String {
    let mut out = String::from("onset_ms,x_deg,y_deg,depth_mm\n");
    for s in target {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_value(s.onset_ms),
            fmt_value(s.x_deg),
            fmt_value(s.y_deg),
            fmt_value(s.depth_mm)
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `manifest.toml`, `gaze.csv` and `target.csv` into `dir`.
///
/// Stored samples already include any offsets, so the manifest lists none.
pub fn save_recording(
    recording: &GazeRecording,
    dir: impl AsRef<Path>,
    unit: TimestampUnit,
) -> Result<RecordingManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = RecordingManifest {
        path: dir.join("manifest.toml"),
        subject_id: recording.subject_id().to_string(),
        device: recording.device(),
        nominal_rate_hz: recording.nominal_rate_hz(),
        ipd_mm: recording.ipd_mm(),
        gaze_file: "gaze.csv".into(),
        target_file: "target.csv".into(),
        timestamp_unit: unit,
        channels: recording.eyes().collect(),
        calibration_steps: recording.calibration_steps(),
        offsets: BTreeMap::new(),
        spectral: None,
    };
    write_file(&manifest.gaze_path(), &gaze_csv(recording, unit))?;
    write_file(&manifest.target_path(), &target_csv(recording.target()))?;
    let toml = toml::to_string(&manifest).map_err(|e| Error::Manifest {
        path: manifest.path.clone(),
        reason: e.to_string(),
    })?;
    write_file(&manifest.path, &toml)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_set(dir: &Path, gaze: &str, manifest_extra: &str, unit: &str) -> PathBuf {
        fs::write(dir.join("gaze.csv"), gaze).unwrap();
        fs::write(
            dir.join("target.csv"),
            "onset_ms,x_deg,y_deg,depth_mm\n0,0,0,1000\n8,5,-2,1000\n",
        )
        .unwrap();
        let m = format!(
            "subject_id = \"s\"\nnominal_rate_hz = 250.0\ngaze_file = \"gaze.csv\"\n\
             target_file = \"target.csv\"\ntimestamp_unit = \"{unit}\"\nchannels = [\"binocular\"]\n{manifest_extra}"
        );
        let p = dir.join("manifest.toml");
        fs::write(&p, m).unwrap();
        p
    }

    #[test]
    fn minimal_file_in_ms() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_set(
            dir.path(),
            "t_ms,bx,by,bv\n0,1,2,1\n4,1,2,1\n8,1,2,1\n12,1,2,1\n",
            "",
            "ms",
        );
        let (_, rec) = load(&p).unwrap();
        let ts: Vec<f64> = rec.channel(Eye::Binocular).unwrap().timestamps().collect();
        assert_eq!(ts, vec![0.0, 4.0, 8.0, 12.0]);
        assert_eq!(rec.ipd_mm(), 62.0);
    }

    #[test]
    fn nanoseconds_convert_to_ms() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_set(
            dir.path(),
            "t_ns,bx,by,bv\n0,1,2,1\n4000000,1,2,1\n8000000,NaN,2,1\n",
            "",
            "ns",
        );
        let (_, rec) = load(&p).unwrap();
        let ch = rec.channel(Eye::Binocular).unwrap();
        assert_eq!(ch.timestamps().collect::<Vec<_>>(), vec![0.0, 4.0, 8.0]);
        assert!(!ch.samples()[2].valid, "NaN forces the sample invalid");
    }

    #[test]
    fn repeated_timestamp_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_set(
            dir.path(),
            "t_ms,bx,by,bv\n0,0,0,1\n4,0,0,1\n4,0,0,1\n8,0,0,1\n",
            "",
            "ms",
        );
        assert!(matches!(load(&p), Err(Error::NonMonotonicTimestamps(2))));
    }

    #[test]
    fn short_row_is_a_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_set(dir.path(), "t_ms,bx,by,bv\n0,0,0,1\n4,0,0\n", "", "ms");
        assert!(matches!(
            load(&p),
            Err(Error::ChannelLengthMismatch {
                expected: 4,
                found: 3,
                ..
            })
        ));
    }

    #[test]
    fn bad_number_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_set(dir.path(), "t_ms,bx,by,bv\n0,0,0,1\n4,abc,0,1\n", "", "ms");
        match load(&p) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "bx");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offsets_are_applied() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_set(
            dir.path(),
            "t_ms,bx,by,bv\n0,1,2,1\n4,1,2,1\n",
            "[offsets.binocular]\ndy = 1.2\n",
            "ms",
        );
        let (_, rec) = load(&p).unwrap();
        assert!((rec.channel(Eye::Binocular).unwrap().samples()[0].y_deg - 3.2).abs() < 1e-12);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load("/nonexistent/dir/manifest.toml").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/manifest.toml"));
    }

    #[test]
    fn save_then_load_is_identity() {
        let samples = |off: f64| -> Vec<GazeSample> {
            (0..50)
                .map(|i| {
                    let t = i as f64 * 4.0 + (i % 3) as f64 * 0.013_7;
                    if i % 7 == 3 {
                        GazeSample::invalid(t)
                    } else {
                        GazeSample::new(t, 0.1 * i as f64 + off, -0.37 * i as f64 / 3.0)
                    }
                })
                .collect()
        };
        let rec = GazeRecording::new(
            "round",
            Device::EtHmd,
            250.0,
            64.5,
            vec![
                GazeChannel::new(Eye::Left, samples(0.0)).unwrap(),
                GazeChannel::new(Eye::Right, samples(0.3)).unwrap(),
            ],
            vec![
                TargetStep::new(0.0, 1.0 / 3.0, 2.0),
                TargetStep::new(100.0, -4.0, 0.1),
            ],
        )
        .unwrap()
        .with_calibration_steps(1)
        .unwrap();
        for unit in [TimestampUnit::Ms, TimestampUnit::Ns] {
            let dir = tempfile::tempdir().unwrap();
            let m = save_recording(&rec, dir.path(), unit).unwrap();
            let (_, back) = load(&m.path).unwrap();
            if unit == TimestampUnit::Ms {
                assert_eq!(back, rec);
            } else {
                // Whole-nanosecond rounding, then stable under a second cycle.
                let dir2 = tempfile::tempdir().unwrap();
                let m2 = save_recording(&back, dir2.path(), unit).unwrap();
                assert_eq!(load(&m2.path).unwrap().1, back);
            }
            assert_eq!(back.len(), 50);
        }
    }
}
