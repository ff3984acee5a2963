//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default viewing distance of the stimulus plane.
pub const DEFAULT_DEPTH_MM: f64 = 1000.0;
/// Default interpupillary distance.
pub const DEFAULT_IPD_MM: f64 = 62.0;

/// One gaze measurement in degrees of visual angle.
///
/// When `valid` is false the position is ignored by every metric and may be NaN;
/// equality likewise ignores the position of invalid samples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GazeSample {
    pub timestamp_ms: f64,
    pub x_deg: f64,
    pub y_deg: f64,
    pub valid: bool,
}

impl PartialEq for GazeSample {
    fn eq(&self, other: &Self) -> bool {
        self.timestamp_ms == other.timestamp_ms
            && self.valid == other.valid
            && (!self.valid || (self.x_deg == other.x_deg && self.y_deg == other.y_deg))
    }
}

impl GazeSample {
    pub fn new(timestamp_ms: f64, x_deg: f64, y_deg: f64) -> Self {
        Self {
            timestamp_ms,
            x_deg,
            y_deg,
            valid: true,
        }
    }

    pub fn invalid(timestamp_ms: f64) -> Self {
        Self {
            timestamp_ms,
            x_deg: f64::NAN,
            y_deg: f64::NAN,
            valid: false,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x_deg, self.y_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
    Binocular,
    /// Per-frame mean of the left and right channels.
    Version,
}

impl Eye {
    pub const ALL: [Eye; 4] = [Eye::Left, Eye::Right, Eye::Binocular, Eye::Version];

    pub fn as_str(&self) -> &'static str {
        match self {
            Eye::Left => "left",
            Eye::Right => "right",
            Eye::Binocular => "binocular",
            Eye::Version => "version",
        }
    }

    pub fn is_monocular(&self) -> bool {
        matches!(self, Eye::Left | Eye::Right)
    }
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Eye::Left),
            "right" | "r" => Ok(Eye::Right),
            "binocular" | "b" => Ok(Eye::Binocular),
            "version" | "v" => Ok(Eye::Version),
            other => Err(format!("unknown eye `{other}`")),
        }
    }
}

/// Ordered samples of one gaze signal. Timestamps are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeChannel {
    eye: Eye,
    samples: Vec<GazeSample>,
}

impl GazeChannel {
    pub fn new(eye: Eye, samples: Vec<GazeSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.timestamp_ms.is_finite() {
                return Err(Error::NonMonotonicTimestamps(i));
            }
            if i > 0 && s.timestamp_ms <= samples[i - 1].timestamp_ms {
                return Err(Error::NonMonotonicTimestamps(i));
            }
        }
        Ok(Self { eye, samples })
    }

    /// Builds a channel whose samples are known to satisfy the timestamp invariant.
    pub(crate) fn from_trusted(eye: Eye, samples: Vec<GazeSample>) -> Self {
        debug_assert!(samples
            .windows(2)
            .all(|w| w[1].timestamp_ms > w[0].timestamp_ms));
        Self { eye, samples }
    }

    pub fn eye(&self) -> Eye {
        self.eye
    }

    pub fn samples(&self) -> &[GazeSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.timestamp_ms)
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }

    pub fn with_eye(mut self, eye: Eye) -> Self {
        self.eye = eye;
        self
    }

    /// Applies `f` to the position of every valid sample.
    pub fn map_valid(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                if s.valid {
                    let (x, y) = f(s.x_deg, s.y_deg);
                    GazeSample {
                        x_deg: x,
                        y_deg: y,
                        ..*s
                    }
                } else {
                    *s
                }
            })
            .collect();
        Self {
            eye: self.eye,
            samples,
        }
    }
}

/// A target position shown from `onset_ms` until the next step's onset.
///
/// Angles are in the nasal-bridge (cyclopean) frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetStep {
    pub onset_ms: f64,
    pub x_deg: f64,
    pub y_deg: f64,
    #[serde(default = "default_depth")]
    pub depth_mm: f64,
}

fn default_depth() -> f64 {
    DEFAULT_DEPTH_MM
}

impl TargetStep {
    pub fn new(onset_ms: f64, x_deg: f64, y_deg: f64) -> Self {
        Self {
            onset_ms,
            x_deg,
            y_deg,
            depth_mm: DEFAULT_DEPTH_MM,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x_deg, self.y_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    EtHmd,
    EyeLink,
    #[default]
    Synthetic,
    Other,
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Device::EtHmd => "ethmd",
            Device::EyeLink => "eyelink",
            Device::Synthetic => "synthetic",
            Device::Other => "other",
        })
    }
}

/// Bounds on target positions for a conforming random-saccade task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetBounds {
    pub max_abs_x_deg: f64,
    pub max_abs_y_deg: f64,
}

impl Default for TargetBounds {
    fn default() -> Self {
        Self {
            max_abs_x_deg: 15.0,
            max_abs_y_deg: 10.0,
        }
    }
}

impl TargetBounds {
    pub fn contains(&self, step: &TargetStep) -> bool {
        step.x_deg.abs() <= self.max_abs_x_deg + 1e-9
            && step.y_deg.abs() <= self.max_abs_y_deg + 1e-9
    }
}

/// One session: every gaze channel sharing a frame clock plus the target sequence.
///
/// The first `calibration_steps` target steps form the calibration prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeRecording {
    subject_id: String,
    device: Device,
    nominal_rate_hz: f64,
    ipd_mm: f64,
    channels: BTreeMap<Eye, GazeChannel>,
    target: Vec<TargetStep>,
    calibration_steps: usize,
}

impl GazeRecording {
    pub fn new(
        subject_id: impl Into<String>,
        device: Device,
        nominal_rate_hz: f64,
        ipd_mm: f64,
        channels: Vec<GazeChannel>,
        target: Vec<TargetStep>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidRecording(
                "at least one channel is required".into(),
            ));
        }
        if !(nominal_rate_hz > 0.0) {
            return Err(Error::InvalidRecording(
                "nominal rate must be positive".into(),
            ));
        }
        if !(ipd_mm >= 0.0) {
            return Err(Error::InvalidRecording("ipd must be non-negative".into()));
        }
        let reference = &channels[0];
        for ch in &channels[1..] {
            if ch.len() != reference.len()
                || ch
                    .timestamps()
                    .zip(reference.timestamps())
                    .any(|(a, b)| a != b)
            {
                return Err(Error::TimestampMismatch);
            }
        }
        for (i, w) in target.windows(2).enumerate() {
            if w[1].onset_ms <= w[0].onset_ms {
                return Err(Error::InvalidRecording(format!(
                    "target onsets not strictly increasing at step {}",
                    i + 1
                )));
            }
        }
        if let Some(s) = target.iter().find(|s| !(s.depth_mm > 0.0)) {
            return Err(Error::InvalidRecording(format!(
                "target depth must be positive (onset {} ms)",
                s.onset_ms
            )));
        }
        let mut map = BTreeMap::new();
        for ch in channels {
            let eye = ch.eye();
            if map.insert(eye, ch).is_some() {
                return Err(Error::InvalidRecording(format!(
                    "duplicate `{eye}` channel"
                )));
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            device,
            nominal_rate_hz,
            ipd_mm,
            channels: map,
            target,
            calibration_steps: 0,
        })
    }

    pub fn with_calibration_steps(mut self, steps: usize) -> Result<Self> {
        if steps > self.target.len() {
            return Err(Error::InvalidRecording(format!(
                "calibration prefix of {steps} steps exceeds {} target steps",
                self.target.len()
            )));
        }
        self.calibration_steps = steps;
        Ok(self)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn device(&self) -> Device {
        self.device
    }

    pub fn nominal_rate_hz(&self) -> f64 {
        self.nominal_rate_hz
    }

    pub fn ipd_mm(&self) -> f64 {
        self.ipd_mm
    }

    pub fn calibration_steps(&self) -> usize {
        self.calibration_steps
    }

    pub fn target(&self) -> &[TargetStep] {
        &self.target
    }

    pub fn channels(&self) -> impl Iterator<Item = &GazeChannel> {
        self.channels.values()
    }

    pub fn eyes(&self) -> impl Iterator<Item = Eye> + '_ {
        self.channels.keys().copied()
    }

    pub fn channel(&self, eye: Eye) -> Option<&GazeChannel> {
        self.channels.get(&eye)
    }

    /// Returns the requested channel, deriving `Version` from left and right when absent.
    pub fn channel_or_derived(&self, eye: Eye) -> Result<std::borrow::Cow<'_, GazeChannel>> {
        use std::borrow::Cow;
        if let Some(ch) = self.channels.get(&eye) {
            return Ok(Cow::Borrowed(ch));
        }
        if eye == Eye::Version {
            let left = self
                .channel(Eye::Left)
                .ok_or(Error::MissingChannel(Eye::Left))?;
            let right = self
                .channel(Eye::Right)
                .ok_or(Error::MissingChannel(Eye::Right))?;
            return crate::spectral::version_signal(left, right).map(Cow::Owned);
        }
        Err(Error::MissingChannel(eye))
    }

    /// Number of frames shared by every channel.
    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, GazeChannel::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Replaces (or inserts) a channel with one sharing the same frame clock.
    pub fn with_channel(mut self, channel: GazeChannel) -> Result<Self> {
        if let Some(reference) = self.channels.values().next() {
            if reference.len() != channel.len()
                || reference
                    .timestamps()
                    .zip(channel.timestamps())
                    .any(|(a, b)| a != b)
            {
                return Err(Error::TimestampMismatch);
            }
        }
        self.channels.insert(channel.eye(), channel);
        Ok(self)
    }
}

/// A gaze direction as a unit vector with z pointing forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitGazeVector {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl UnitGazeVector {
    /// Normalizes `(vx, vy, vz)`; returns `None` for a zero or non-finite vector.
    pub fn normalized(vx: f64, vy: f64, vz: f64) -> Option<Self> {
        let norm = (vx * vx + vy * vy + vz * vz).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        Some(Self {
            vx: vx / norm,
            vy: vy / norm,
            vz: vz / norm,
        })
    }

    pub fn is_unit(&self) -> bool {
        ((self.vx * self.vx + self.vy * self.vy + self.vz * self.vz) - 1.0).abs() <= 1e-6
    }
}

/// Horizontal or vertical gaze component.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub enum Dimension {
    #[default]
    #[serde(rename = "H")]
    Horizontal,
    #[serde(rename = "V")]
    Vertical,
}

impl Dimension {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Horizontal => "H",
            Dimension::Vertical => "V",
        }
    }

    pub fn of(&self, s: &GazeSample) -> f64 {
        match self {
            Dimension::Horizontal => s.x_deg,
            Dimension::Vertical => s.y_deg,
        }
    }

    pub fn of_target(&self, t: &TargetStep) -> f64 {
        match self {
            Dimension::Horizontal => t.x_deg,
            Dimension::Vertical => t.y_deg,
        }
    }

    pub fn orthogonal(&self) -> Self {
        match self {
            Dimension::Horizontal => Dimension::Vertical,
            Dimension::Vertical => Dimension::Horizontal,
        }
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "H" | "HORIZONTAL" | "X" => Ok(Dimension::Horizontal),
            "V" | "VERTICAL" | "Y" => Ok(Dimension::Vertical),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}
