use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gazeqc_core::report::{self, metric_rows, CalibrationMode, MetricValue, QualityReport};
use gazeqc_core::statkit::{self, TestResult, TransformKind};
use serde::Serialize;

use crate::assess::summary_csv;
use crate::failure::{Failure, Status};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    None,
    Cbrt,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    /// Reports of group A: JSON files or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    pub a: Vec<PathBuf>,
    /// Reports of group B.
    #[arg(long, required = true, num_args = 1..)]
    pub b: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "gazeqc-compare")]
    pub out: PathBuf,
    /// Transform applied to accuracy and precision before testing.
    #[arg(long, value_enum, default_value = "cbrt")]
    pub transform: TransformArg,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// Report JSON files or directories of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "gazeqc-out")]
    pub out: PathBuf,
}

type Key = (String, CalibrationMode, &'static str, &'static str);

fn load_reports(inputs: &[PathBuf]) -> Result<Vec<QualityReport>, Failure> {
    io::reports(inputs)?
        .iter()
        .map(|p| {
            report::from_json(&io::read_text(p)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn collect(reports: &[QualityReport], metrics: &[&str]) -> BTreeMap<Key, Vec<f64>> {
    let mut out: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for row in metric_rows(r) {
            if let (true, MetricValue::Number(v)) = (metrics.contains(&row.metric), row.value) {
                if v.is_finite() {
                    out.entry((row.eye, row.calibration, row.metric, row.dimension))
                        .or_default()
                        .push(v);
                }
            }
        }
    }
    out
}

#[derive(Serialize)]
struct WelchRow {
    eye: String,
    calibration: CalibrationMode,
    metric: &'static str,
    dimension: &'static str,
    n_a: usize,
    n_b: usize,
    mean_a: f64,
    mean_b: f64,
    test: TestResult,
    p_holm: f64,
}

#[derive(Serialize)]
struct SlopeRow {
    group: &'static str,
    eye: String,
    calibration: CalibrationMode,
    dimension: &'static str,
    n: usize,
    mean: f64,
    sd: f64,
    test: TestResult,
    p_holm: f64,
}

#[derive(Serialize)]
struct Comparison {
    transform: Option<TransformKind>,
    welch: Vec<WelchRow>,
    slopes_vs_one: Vec<SlopeRow>,
}

pub fn run_compare(args: &CompareArgs) -> Result<Status, Failure> {
    let a = load_reports(&args.a)?;
    let b = load_reports(&args.b)?;
    let transform = match args.transform {
        TransformArg::None => None,
        TransformArg::Cbrt => Some(TransformKind::CubeRoot),
    };
    let tested = ["accuracy", "precision", "latency_ms", "isi_sd_ms"];
    let (ga, gb) = (collect(&a, &tested), collect(&b, &tested));
    let prep = |metric: &str, v: &[f64]| match (transform, metric) {
        (Some(k), "accuracy" | "precision") => statkit::transform(v, k).values,
        _ => v.to_vec(),
    };
    let mut welch = Vec::new();
    let mut status = Status::Ok;
    for (key, va) in &ga {
        let Some(vb) = gb.get(key) else { continue };
        let (eye, calibration, metric, dimension) = key.clone();
        match statkit::welch_anova_two_groups(&prep(metric, va), &prep(metric, vb)) {
            Ok(test) => welch.push(WelchRow {
                eye,
                calibration,
                metric,
                dimension,
                n_a: va.len(),
                n_b: vb.len(),
                mean_a: statkit::mean(va).unwrap_or(f64::NAN),
                mean_b: statkit::mean(vb).unwrap_or(f64::NAN),
                test,
                p_holm: f64::NAN,
            }),
            Err(e) => {
                log::warn!("{eye}/{calibration}/{metric}/{dimension}: {e}");
                status = Status::Warnings;
            }
        }
    }
    let adjusted = statkit::holm_adjust(
        &welch
            .iter()
            .map(|r| r.test.p_two_tailed)
            .collect::<Vec<_>>(),
    );
    welch
        .iter_mut()
        .zip(adjusted)
        .for_each(|(r, p)| r.p_holm = p);

    let mut slopes = Vec::new();
    for (group, reports) in [("A", &a), ("B", &b)] {
        for ((eye, calibration, _, dimension), v) in collect(reports, &["linearity_slope"]) {
            match statkit::one_sample_t(&v, 1.0) {
                Ok(test) => slopes.push(SlopeRow {
                    group,
                    eye,
                    calibration,
                    dimension,
                    n: v.len(),
                    mean: statkit::mean(&v).unwrap_or(f64::NAN),
                    sd: statkit::sample_sd(&v).unwrap_or(f64::NAN),
                    test,
                    p_holm: f64::NAN,
                }),
                Err(e) => {
                    log::warn!("{group} {eye}/{calibration}/{dimension} slope: {e}");
                    status = Status::Warnings;
                }
            }
        }
    }
    let adjusted = statkit::holm_adjust(
        &slopes
            .iter()
            .map(|r| r.test.p_two_tailed)
            .collect::<Vec<_>>(),
    );
    slopes
        .iter_mut()
        .zip(adjusted)
        .for_each(|(r, p)| r.p_holm = p);

    if welch.is_empty() && slopes.is_empty() {
        return Err(Failure::insufficient(
            "no metric has at least two values in both groups",
        ));
    }
    let cmp = Comparison {
        transform,
        welch,
        slopes_vs_one: slopes,
    };
    write_comparison(&args.out, &cmp)?;
    Ok(status)
}

fn write_comparison(out: &Path, cmp: &Comparison) -> Result<(), Failure> {
    let mut w = String::from(
        "eye,calibration,metric,dimension,n_a,n_b,mean_a,mean_b,t,df,p,p_holm,degenerate\n",
    );
    for r in &cmp.welch {
        let _ = writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.eye,
            r.calibration,
            r.metric,
            r.dimension,
            r.n_a,
            r.n_b,
            r.mean_a,
            r.mean_b,
            r.test.statistic,
            r.test.df,
            r.test.p_two_tailed,
            r.p_holm,
            r.test.degenerate
        );
    }
    io::write_atomic(&out.join("compare_welch.csv"), w.as_bytes())?;
    let mut s =
        String::from("group,eye,calibration,dimension,n,mean,sd,t,df,p,p_holm,degenerate\n");
    for r in &cmp.slopes_vs_one {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.group,
            r.eye,
            r.calibration,
            r.dimension,
            r.n,
            r.mean,
            r.sd,
            r.test.statistic,
            r.test.df,
            r.test.p_two_tailed,
            r.p_holm,
            r.test.degenerate
        );
    }
    io::write_atomic(&out.join("compare_slopes.csv"), s.as_bytes())?;
    let json = serde_json::to_string_pretty(cmp).map_err(|e| Failure::usage(e.to_string()))? + "\n";
    io::write_atomic(&out.join("compare.json"), json.as_bytes())?;

    println!(
        "{:<10} {:<6} {:<12} {:<4} {:>9} {:>8} {:>9} {:>9}",
        "eye", "calib", "metric", "dim", "t", "df", "p", "p_holm"
    );
    for r in &cmp.welch {
        println!(
            "{:<10} {:<6} {:<12} {:<4} {:>9.3} {:>8.2} {:>9.4} {:>9.4}",
            r.eye,
            r.calibration,
            r.metric,
            r.dimension,
            r.test.statistic,
            r.test.df,
            r.test.p_two_tailed,
            r.p_holm
        );
    }
    if !cmp.slopes_vs_one.is_empty() {
        println!("\nlinearity slopes against 1.0");
        for r in &cmp.slopes_vs_one {
            println!(
                "{} {:<10} {:<6} {:<2} mean {:.3} ± {:.3}  t({}) = {:.2}, p = {:.4}, p_holm = {:.4}",
                r.group, r.eye, r.calibration, r.dimension, r.mean, r.sd, r.test.df, r.test.statistic, r.test.p_two_tailed, r.p_holm
            );
        }
    }
    Ok(())
}

pub fn run_report(args: &ReportArgs) -> Result<Status, Failure> {
    let reports = load_reports(&args.inputs)?;
    let rows = report::summarize(&reports);
    let text = report::render_summary(&rows);
    io::write_atomic(&args.out.join("summary.txt"), text.as_bytes())?;
    io::write_atomic(&args.out.join("summary.csv"), summary_csv(&rows).as_bytes())?;
    io::write_atomic(
        &args.out.join("metrics.csv"),
        report::to_csv(&reports).as_bytes(),
    )?;
    print!("{text}");
    Ok(if reports.iter().any(|r| !r.warnings.is_empty()) {
        Status::Warnings
    } else {
        Status::Ok
    })
}
