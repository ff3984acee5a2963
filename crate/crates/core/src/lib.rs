//! Data-quality assessment for eye-tracker recordings made with a random
//! saccade task.
//!
//! The pipeline estimates the gaze latency, cuts the recording into fixations,
//! screens outliers and reports spatial accuracy, spatial precision, temporal
//! precision, linearity and crosstalk. Optional recalibration fits linear or
//! quadratic maps on a calibration prefix, and [`spectral`] recovers the filter
//! a device applies to its binocular signal. [`synth`] generates recordings with
//! known ground truth.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod recalibration;
pub mod report;
pub mod spectral;
pub mod statkit;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Device, Dimension, Eye, GazeChannel, GazeRecording, GazeSample, TargetBounds, TargetStep,
    UnitGazeVector, DEFAULT_DEPTH_MM, DEFAULT_IPD_MM,
};
