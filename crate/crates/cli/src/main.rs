//! `gazeqc`: batch data-quality assessment for eye-tracker recordings.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod assess;
mod compare;
mod config;
mod failure;
mod io;
mod spectrum;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gazeqc_core::report::CalibrationMode;
use gazeqc_core::Eye;

use crate::failure::{Failure, Status, EXIT_CODES};

#[derive(Parser)]
#[command(name = "gazeqc", version, about = "Eye-tracker data quality assessment", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute quality reports for recordings.
    #[command(after_help = EXIT_CODES)]
    Assess(assess::AssessArgs),
    /// Fit recalibration maps on the calibration prefix and compare accuracy before and after.
    #[command(after_help = EXIT_CODES)]
    Recal(assess::AssessArgs),
    /// Average fixation spectra and estimate the binocular filter.
    #[command(after_help = EXIT_CODES)]
    Spectrum(spectrum::SpectrumArgs),
    /// Generate a synthetic corpus with known ground truth.
    #[command(after_help = EXIT_CODES)]
    Synth(synth::SynthArgs),
    /// Test two groups of reports against each other and linearity slopes against 1.
    #[command(after_help = EXIT_CODES)]
    Compare(compare::CompareArgs),
    /// Summarise existing reports as mean ± SD tables.
    #[command(after_help = EXIT_CODES)]
    Report(compare::ReportArgs),
}

/// Options shared by the batch commands.
#[derive(Args, Debug, Clone)]
pub struct BatchArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibrationArg {
    None,
    Usc1,
    Usc2,
    Both,
}

impl CalibrationArg {
    /// Recalibrated modes always come with the uncalibrated baseline.
    pub fn modes(self) -> Vec<CalibrationMode> {
        match self {
            CalibrationArg::None => vec![CalibrationMode::None],
            CalibrationArg::Usc1 => vec![CalibrationMode::None, CalibrationMode::Usc1],
            CalibrationArg::Usc2 => vec![CalibrationMode::None, CalibrationMode::Usc2],
            CalibrationArg::Both => vec![
                CalibrationMode::None,
                CalibrationMode::Usc1,
                CalibrationMode::Usc2,
            ],
        }
    }
}

pub fn parse_eye(s: &str) -> Result<Eye, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GAZEQC_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assess(a) => assess::run(&a, false),
        Command::Recal(a) => assess::run(&a, true),
        Command::Spectrum(a) => spectrum::run(&a),
        Command::Synth(a) => synth::run(&a),
        Command::Compare(a) => compare::run_compare(&a),
        Command::Report(a) => compare::run_report(&a),
    };
    match result {
        Ok(status) => ExitCode::from(status.code()),
        Err(Failure { status, message }) => {
            eprintln!("gazeqc: {message}");
            ExitCode::from(status.code().max(Status::Warnings.code()))
        }
    }
}
