use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gazeqc_core::ingest;
use gazeqc_core::pipeline::{
    analyze_spectra, spectral_segments, SpectralSegments, SpectrumOptions, SpectrumReport,
};
use gazeqc_core::{Dimension, Eye};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::FileConfig;
use crate::failure::{Failure, Status};
use crate::io::{self, Diagnostic};
use crate::BatchArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DimensionArg {
    H,
    V,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumArgs {
    /// Manifest files, recording directories, or directories of recordings.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub batch: BatchArgs,
    /// Gaze dimension analysed.
    #[arg(long, value_enum)]
    pub dimension: Option<DimensionArg>,
    /// Milliseconds after a target onset before a segment may start.
    #[arg(long)]
    pub settle_ms: Option<f64>,
    /// Segments taken from each recording.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Largest latency shift searched, in samples.
    #[arg(long)]
    pub max_shift: Option<usize>,
    /// Divide raw segment spectra instead of Hann-windowed ones.
    #[arg(long)]
    pub no_window: bool,
}

#[derive(Serialize)]
struct SegmentsUsed {
    subject_id: String,
    starts: Vec<usize>,
}

#[derive(Serialize)]
struct Summary {
    dimension: Dimension,
    rate_hz: f64,
    n_recordings: usize,
    n_segments: usize,
    n_pairs: usize,
    minus3db_hz: Option<f64>,
    minus3db_is_nyquist: bool,
    segments: Vec<SegmentsUsed>,
}

fn options(args: &SpectrumArgs, file: &FileConfig) -> Result<SpectrumOptions, Failure> {
    let mut o = file.spectrum.clone();
    if let Some(d) = args.dimension {
        o.dimension = match d {
            DimensionArg::H => Dimension::Horizontal,
            DimensionArg::V => Dimension::Vertical,
        };
    }
    if let Some(v) = args.settle_ms {
        o.settle_ms = v;
    }
    if let Some(v) = args.segments {
        o.segments_per_recording = v;
    }
    if let Some(v) = args.max_shift {
        o.max_shift = v;
    }
    if args.no_window {
        o.filter.window = false;
    }
    if !(o.settle_ms >= 0.0) || o.segments_per_recording == 0 || o.max_shift == 0 {
        return Err(Failure::usage(
            "settle_ms must be non-negative; segments and max_shift at least 1",
        ));
    }
    Ok(o)
}

fn segments_of(manifest: &Path, opts: &SpectrumOptions) -> Result<SpectralSegments, Failure> {
    let (m, recording) = ingest::load(manifest)?;
    Ok(spectral_segments(&recording, opts, m.spectral.as_ref())?)
}

pub fn run(args: &SpectrumArgs) -> Result<Status, Failure> {
    let file = FileConfig::load(args.batch.config.as_deref())?;
    let opts = options(args, &file)?;
    let out = args
        .batch
        .out
        .clone()
        .or(file.out.clone())
        .unwrap_or_else(|| PathBuf::from("gazeqc-out"));
    let manifests = io::manifests(&args.inputs)?;
    let pool = io::worker_pool(args.batch.jobs.or(file.jobs))?;
    let results: Vec<Result<SpectralSegments, Failure>> = pool.install(|| {
        manifests
            .par_iter()
            .map(|m| segments_of(m, &opts))
            .collect()
    });
    let mut pooled = Vec::new();
    let mut diags = Vec::new();
    for (manifest, r) in manifests.iter().zip(results) {
        match r {
            Ok(s) => pooled.push(s),
            Err(failure) => diags.push(Diagnostic {
                input: manifest.clone(),
                failure,
            }),
        }
    }
    let mut status = io::write_diagnostics(&out, &diags)?;
    if pooled.is_empty() {
        return Err(Failure::insufficient(
            "no recording yielded a valid 256-sample segment",
        ));
    }
    let report = analyze_spectra(&pooled, &opts)?;
    write_outputs(&out, &pooled, &report)?;
    if report.filter.is_some() && !has_fixational_noise(&pooled) {
        log::warn!(
            "version segments are flat to within {FLAT_DEG:e}°; \
             the filter estimate divides rounding noise and is meaningless"
        );
        status = status.max(Status::Warnings);
    }
    match &report.filter {
        Some(f) => println!(
            "binocular filter -3 dB point: {:.2} Hz{} from {} segment pairs",
            f.minus3db_hz,
            if f.minus3db_is_nyquist {
                " (Nyquist)"
            } else {
                ""
            },
            f.n_pairs
        ),
        None => {
            log::warn!("no binocular and version pair; filter not estimated");
            status = status.max(Status::Warnings);
        }
    }
    Ok(status)
}

/// Standard deviation below which a segment is treated as noise free.
const FLAT_DEG: f64 = 1e-9;

/// The filter is identified from fixational noise; without any there is
/// nothing to deconvolve.
fn has_fixational_noise(pooled: &[SpectralSegments]) -> bool {
    pooled
        .iter()
        .filter_map(|p| p.segments.get(&Eye::Version))
        .flatten()
        .any(|seg| {
            let n = seg.len() as f64;
            let mean = seg.iter().sum::<f64>() / n;
            let var = seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            var.sqrt() > FLAT_DEG
        })
}

fn write_outputs(
    out: &Path,
    pooled: &[SpectralSegments],
    report: &SpectrumReport,
) -> Result<(), Failure> {
    let s = &report.spectra;
    let mut csv = String::from("freq_hz");
    for eye in s.magnitude.keys() {
        let _ = write!(csv, ",{eye}");
    }
    csv.push('\n');
    for (i, f) in s.freq_hz.iter().enumerate() {
        let _ = write!(csv, "{f}");
        for m in s.magnitude.values() {
            let _ = write!(csv, ",{}", m[i]);
        }
        csv.push('\n');
    }
    io::write_atomic(&out.join("spectrum.csv"), csv.as_bytes())?;

    if let Some(f) = &report.filter {
        let mut resp = String::from("freq_hz,response_db\n");
        for (fr, db) in f.freq_hz.iter().zip(&f.response_db) {
            let _ = writeln!(resp, "{fr},{db}");
        }
        io::write_atomic(&out.join("filter_response.csv"), resp.as_bytes())?;
        // Circular order to signed lags, most negative first.
        let n = f.impulse.len() as i64;
        let mut lags: Vec<(i64, f64)> = f
            .impulse
            .iter()
            .enumerate()
            .map(|(k, &h)| {
                let k = k as i64;
                (if k >= n / 2 { k - n } else { k }, h)
            })
            .collect();
        lags.sort_by_key(|(k, _)| *k);
        let mut imp = String::from("lag,h\n");
        for (k, h) in lags {
            let _ = writeln!(imp, "{k},{h}");
        }
        io::write_atomic(&out.join("filter_impulse.csv"), imp.as_bytes())?;
    }

    let summary = Summary {
        dimension: report.dimension,
        rate_hz: pooled[0].rate_hz,
        n_recordings: pooled.len(),
        n_segments: s.n_segments,
        n_pairs: report.filter.as_ref().map_or(0, |f| f.n_pairs),
        minus3db_hz: report.filter.as_ref().map(|f| f.minus3db_hz),
        minus3db_is_nyquist: report
            .filter
            .as_ref()
            .is_some_and(|f| f.minus3db_is_nyquist),
        segments: pooled
            .iter()
            .map(|p| SegmentsUsed {
                subject_id: p.subject_id.clone(),
                starts: p.choices.iter().map(|c| c.start).collect(),
            })
            .collect(),
    };
    let json =
        serde_json::to_string_pretty(&summary).map_err(|e| Failure::usage(e.to_string()))? + "\n";
    io::write_atomic(&out.join("spectrum_summary.json"), json.as_bytes())
}
