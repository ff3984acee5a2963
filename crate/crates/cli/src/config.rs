//! Optional TOML run configuration. Command-line flags override its values.
//!
//! ```toml
//! jobs = 4
//!
//! [assess]
//! calibration = ["none", "usc1"]
//! abs_limit_deg = 2.0
//! window = { discard_ms = 400.0, use_ms = 500.0 }
//!
//! [spectrum]
//! settle_ms = 100.0
//!
//! [synth]
//! n_saccades = 30
//! ```

use std::path::{Path, PathBuf};

use gazeqc_core::pipeline::{AssessOptions, SpectrumOptions};
use gazeqc_core::synth::SynthConfig;
use serde::Deserialize;

use crate::failure::Failure;
use crate::io::read_text;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub assess: AssessOptions,
    pub spectrum: SpectrumOptions,
    pub synth: SynthConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read_text(path)?;
        toml::from_str(&text)
            .map_err(|e| Failure::usage(format!("{}: {}", path.display(), e.message())))
    }
}
