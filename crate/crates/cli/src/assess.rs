use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gazeqc_core::ingest;
use gazeqc_core::metrics::Aggregation;
use gazeqc_core::pipeline::{assess_recording, AssessOptions};
use gazeqc_core::report::{self, CalibrationMode, QualityReport, SummaryRow};
use gazeqc_core::{statkit, Eye};
use rayon::prelude::*;

use crate::config::FileConfig;
use crate::failure::{Failure, Status};
use crate::io::{self, Diagnostic};
use crate::{parse_eye, BatchArgs, CalibrationArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Mean,
    Median,
}

#[derive(Args, Debug, Clone)]
pub struct AssessArgs {
    /// Manifest files, recording directories, or directories of recordings.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub batch: BatchArgs,
    /// Eyes to analyse (left, right, binocular, version); default is every channel.
    #[arg(long, value_delimiter = ',', value_parser = parse_eye)]
    pub eyes: Vec<Eye>,
    /// Recalibration; recalibrated modes are reported next to the uncalibrated baseline.
    #[arg(long, value_enum)]
    pub calibration: Option<CalibrationArg>,
    /// Milliseconds skipped after each target onset.
    #[arg(long)]
    pub discard_ms: Option<f64>,
    /// Milliseconds of each fixation used after the skipped part.
    #[arg(long)]
    pub use_ms: Option<f64>,
    /// Largest latency shift searched, in samples.
    #[arg(long)]
    pub max_shift: Option<usize>,
    /// Absolute outlier limit in degrees.
    #[arg(long)]
    pub abs_limit_deg: Option<f64>,
    /// Samples per stable bin for recalibration.
    #[arg(long)]
    pub bin_size: Option<usize>,
    /// Stable bins kept per calibration fixation.
    #[arg(long)]
    pub bins_per_fixation: Option<usize>,
    /// Intersample intervals above this count as dropped frames.
    #[arg(long)]
    pub drop_ms: Option<f64>,
    /// Intersample intervals below this count as short.
    #[arg(long)]
    pub short_ms: Option<f64>,
    /// How per-fixation values combine into the recording value.
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Leave per-fixation rows out of the reports.
    #[arg(long)]
    pub no_fixations: bool,
    /// Per-recording report formats.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv")]
    pub format: Vec<FormatArg>,
    /// Record the generation time in each report.
    #[arg(long)]
    pub stamp: bool,
}

fn options(args: &AssessArgs, file: &FileConfig, recal: bool) -> AssessOptions {
    let mut o = file.assess.clone();
    if !args.eyes.is_empty() {
        o.eyes = args.eyes.clone();
    }
    match args.calibration {
        Some(c) => o.calibration = c.modes(),
        None if recal && o.calibration == [CalibrationMode::None] => {
            o.calibration = CalibrationArg::Both.modes()
        }
        None => {}
    }
    if let Some(v) = args.discard_ms {
        o.window.discard_ms = v;
    }
    if let Some(v) = args.use_ms {
        o.window.use_ms = v;
    }
    if let Some(v) = args.max_shift {
        o.max_shift = v;
    }
    if let Some(v) = args.abs_limit_deg {
        o.abs_limit_deg = v;
    }
    if let Some(v) = args.bin_size {
        o.bin_size = v;
    }
    if let Some(v) = args.bins_per_fixation {
        o.bins_per_fixation = v;
    }
    if let Some(v) = args.drop_ms {
        o.drop_ms = v;
    }
    if let Some(v) = args.short_ms {
        o.short_ms = v;
    }
    if let Some(a) = args.aggregation {
        o.aggregation = match a {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Median => Aggregation::Median,
        };
    }
    if args.no_fixations {
        o.fixations = false;
    }
    o
}

fn assess_one(manifest: &Path, opts: &AssessOptions) -> Result<QualityReport, Failure> {
    log::info!("assessing {}", manifest.display());
    let (_, recording) = ingest::load(manifest)?;
    Ok(assess_recording(&recording, opts)?)
}

pub fn run(args: &AssessArgs, recal: bool) -> Result<Status, Failure> {
    let file = FileConfig::load(args.batch.config.as_deref())?;
    let opts = options(args, &file, recal);
    opts.validate()?;
    let out = args
        .batch
        .out
        .clone()
        .or(file.out.clone())
        .unwrap_or_else(|| PathBuf::from("gazeqc-out"));
    let manifests = io::manifests(&args.inputs)?;
    let pool = io::worker_pool(args.batch.jobs.or(file.jobs))?;
    let results: Vec<Result<QualityReport, Failure>> =
        pool.install(|| manifests.par_iter().map(|m| assess_one(m, &opts)).collect());

    let stamp = args
        .stamp
        .then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let mut reports = Vec::new();
    let mut diags = Vec::new();
    for (manifest, result) in manifests.iter().zip(results) {
        match result {
            Ok(mut r) => {
                r.generated_at = stamp.clone();
                reports.push(r);
            }
            Err(failure) => diags.push(Diagnostic {
                input: manifest.clone(),
                failure,
            }),
        }
    }

    let stems = io::unique_stems(reports.iter().map(|r| r.subject_id.as_str()));
    for (r, stem) in reports.iter().zip(&stems) {
        for f in &args.format {
            let (ext, bytes) = match f {
                FormatArg::Json => ("json", report::to_json(r).into_bytes()),
                FormatArg::Csv => ("csv", report::to_csv(std::slice::from_ref(r)).into_bytes()),
            };
            io::write_atomic(&out.join("reports").join(format!("{stem}.{ext}")), &bytes)?;
        }
    }
    if !reports.is_empty() {
        let rows = report::summarize(&reports);
        let text = report::render_summary(&rows);
        io::write_atomic(&out.join("summary.txt"), text.as_bytes())?;
        io::write_atomic(&out.join("summary.csv"), summary_csv(&rows).as_bytes())?;
        io::write_atomic(
            &out.join("metrics.csv"),
            report::to_csv(&reports).as_bytes(),
        )?;
        print!("{text}");
        if recal {
            write_recal(&out, &reports, &stems)?;
        }
    }

    let mut status = io::write_diagnostics(&out, &diags)?;
    for r in &reports {
        for w in &r.warnings {
            log::warn!("{w}");
        }
    }
    if status == Status::Ok && reports.iter().any(|r| !r.warnings.is_empty()) {
        status = Status::Warnings;
    }
    Ok(status)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("eye,calibration,metric,dimension,mean,sd,n\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.eye, r.calibration, r.metric, r.dimension, r.mean, r.sd, r.n
        );
    }
    s
}

/// Per-subject accuracy before and after each recalibration, plus the fitted maps.
fn write_recal(out: &Path, reports: &[QualityReport], stems: &[String]) -> Result<(), Failure> {
    let mut csv =
        String::from("subject_id,eye,calibration,accuracy_before,accuracy_after,improvement_pct\n");
    let mut improvements: Vec<((Eye, CalibrationMode), Vec<f64>)> = Vec::new();
    for (r, stem) in reports.iter().zip(stems) {
        for e in r
            .eyes
            .iter()
            .filter(|e| e.calibration != CalibrationMode::None)
        {
            if let Some(map) = &e.calibration_map {
                let json = serde_json::to_string_pretty(map)
                    .map_err(|err| Failure::usage(err.to_string()))?
                    + "\n";
                let path = out
                    .join("maps")
                    .join(format!("{stem}.{}.{}.json", e.eye, e.calibration));
                io::write_atomic(&path, json.as_bytes())?;
            }
            let before = r.eye(e.eye, CalibrationMode::None).and_then(|b| b.accuracy);
            let (Some(before), Some(after)) = (before, e.accuracy) else {
                continue;
            };
            let pct = 100.0 * (before.theta_c - after.theta_c) / before.theta_c;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.subject_id, e.eye, e.calibration, before.theta_c, after.theta_c, pct
            );
            let key = (e.eye, e.calibration);
            match improvements.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(pct),
                None => improvements.push((key, vec![pct])),
            }
        }
    }
    io::write_atomic(&out.join("recal.csv"), csv.as_bytes())?;
    for ((eye, mode), v) in &improvements {
        let better = v.iter().filter(|p| **p > 0.0).count();
        println!(
            "{eye} {mode}: median accuracy improvement {:.1}%, improved in {better}/{}",
            statkit::median(v).unwrap_or(f64::NAN),
            v.len()
        );
    }
    Ok(())
}
