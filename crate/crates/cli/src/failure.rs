use std::fmt;
use std::io::ErrorKind;

use gazeqc_core::Error;

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  finished with analysis warnings
  2  usage or configuration error, including missing input files
  3  insufficient data for an analysis
  4  I/O error while reading or writing files

Set GAZEQC_LOG (error, warn, info, debug, trace) to control log verbosity.";

/// Process exit status, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok = 0,
    Warnings = 1,
    Usage = 2,
    Insufficient = 3,
    Io = 4,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            status: Status::Usage,
            message: message.into(),
        }
    }

    pub fn insufficient(message: impl Into<String>) -> Self {
        Self {
            status: Status::Insufficient,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        Self {
            status: Status::Io,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let status = match &err {
            // A file named by the user or a manifest that does not exist is a
            // usage problem, not a device failure.
            Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => Status::Usage,
            Error::Io { .. } => Status::Io,
            Error::InsufficientData(_)
            | Error::NoValidSamples
            | Error::NoUsableBins(_)
            | Error::InvalidSamples => Status::Insufficient,
            Error::DegenerateVector
            | Error::DegenerateDesign(_)
            | Error::RankDeficient
            | Error::WrongLength { .. }
            | Error::NotPowerOfTwo(_)
            | Error::SpectralDivideByZero(_) => Status::Insufficient,
            _ => Status::Usage,
        };
        Self {
            status,
            message: err.to_string(),
        }
    }
}
