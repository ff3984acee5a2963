use std::path::PathBuf;

use crate::types::Eye;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate gaze vector: both arguments of an arctangent are zero")]
    DegenerateVector,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(&'static str),

    #[error("timestamps not strictly increasing at sample {0}")]
    NonMonotonicTimestamps(usize),

    #[error("channel length mismatch at line {line}: expected {expected} fields, found {found}")]
    ChannelLengthMismatch {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("parse error at line {line}, column `{column}`: {reason}")]
    Parse {
        line: u64,
        column: String,
        reason: String,
    },

    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("recording has no `{0}` channel")]
    MissingChannel(Eye),

    #[error("recording invariant violated: {0}")]
    InvalidRecording(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no valid samples")]
    NoValidSamples,

    #[error("degenerate design: {0}")]
    DegenerateDesign(&'static str),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("no usable bins in fixation {0}")]
    NoUsableBins(usize),

    #[error("expected {expected} samples, got {got}")]
    WrongLength { expected: usize, got: usize },

    #[error("segment contains invalid samples")]
    InvalidSamples,

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("spectral division by zero at bin {0}")]
    SpectralDivideByZero(usize),

    #[error("channels do not share timestamps")]
    TimestampMismatch,

    #[error("invalid synthetic configuration: {0}")]
    ConfigInvalid(String),

    #[error("invalid report: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
