use std::path::PathBuf;

use clap::Args;
use gazeqc_core::synth::{self, BinocularFilter, SynthConfig};
use rayon::prelude::*;

use crate::config::FileConfig;
use crate::failure::{Failure, Status};
use crate::io;

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// TOML configuration file; its `[synth]` table sets the generator, flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus directory; each recording goes into its own subdirectory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Number of recordings; recording k uses seed + k.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Subject ids are this prefix plus a two-digit number.
    #[arg(long, default_value = "synth")]
    pub prefix: String,
    /// Seed of the first recording.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Nominal sampling rate.
    #[arg(long)]
    pub rate_hz: Option<f64>,
    /// Task saccades after the calibration prefix.
    #[arg(long)]
    pub n_saccades: Option<usize>,
    /// Gaze latency relative to the target onsets.
    #[arg(long)]
    pub latency_ms: Option<f64>,
    /// Horizontal target range, ± degrees.
    #[arg(long)]
    pub range_x_deg: Option<f64>,
    /// Vertical target range, ± degrees.
    #[arg(long)]
    pub range_y_deg: Option<f64>,
    /// Noise MAD in degrees for every stored channel.
    #[arg(long)]
    pub noise_mad_deg: Option<f64>,
    /// Standard deviation of the intersample intervals.
    #[arg(long)]
    pub isi_jitter_sd_ms: Option<f64>,
    /// Probability that a frame is dropped.
    #[arg(long)]
    pub drop_rate: Option<f64>,
    /// Make the binocular channel a low-pass filtered version signal with this -3 dB point.
    #[arg(long, conflicts_with = "moving_average")]
    pub lowpass_hz: Option<f64>,
    /// Taps of the low-pass filter.
    #[arg(long, default_value_t = 21)]
    pub lowpass_taps: usize,
    /// Make the binocular channel a moving average of the version signal over this many samples.
    #[arg(long)]
    pub moving_average: Option<usize>,
}

fn config(args: &SynthArgs, file: &FileConfig) -> SynthConfig {
    let mut c = file.synth.clone();
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.rate_hz {
        c.rate_hz = v;
    }
    if let Some(v) = args.n_saccades {
        c.n_saccades = v;
    }
    if let Some(v) = args.latency_ms {
        c.latency_ms = v;
    }
    if let Some(v) = args.range_x_deg {
        c.bounds.max_abs_x_deg = v;
    }
    if let Some(v) = args.range_y_deg {
        c.bounds.max_abs_y_deg = v;
    }
    if let Some(v) = args.noise_mad_deg {
        c.left.noise_mad_deg = v;
        c.right.noise_mad_deg = v;
        c.binocular.noise_mad_deg = v;
    }
    if let Some(v) = args.isi_jitter_sd_ms {
        c.isi_jitter_sd_ms = v;
    }
    if let Some(v) = args.drop_rate {
        c.drop_rate = v;
    }
    if let Some(cutoff_hz) = args.lowpass_hz {
        c.binocular_filter = Some(BinocularFilter::LowPass {
            cutoff_hz,
            taps: args.lowpass_taps,
        });
    }
    if let Some(n) = args.moving_average {
        c.binocular_filter = Some(BinocularFilter::MovingAverage(n));
    }
    c
}

pub fn run(args: &SynthArgs) -> Result<Status, Failure> {
    let file = FileConfig::load(args.config.as_deref())?;
    let base = config(args, &file);
    base.validate()?;
    if args.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let out = args
        .out
        .clone()
        .or(file.out.clone())
        .ok_or_else(|| Failure::usage("synth needs --out or `out` in the configuration"))?;
    let configs: Vec<SynthConfig> = (0..args.count)
        .map(|k| SynthConfig {
            seed: base.seed.wrapping_add(k as u64),
            subject_id: format!("{}{:02}", args.prefix, k + 1),
            ..base.clone()
        })
        .collect();
    let pool = io::worker_pool(args.jobs.or(file.jobs))?;
    let written: Vec<Result<PathBuf, Failure>> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let (rec, gt) = synth::generate(cfg)?;
                let dir = out.join(&cfg.subject_id);
                let manifest = synth::write_corpus_entry(&dir, &rec, &gt)?;
                let expected = synth::ground_truth_report(&gt, &rec)?;
                let json = serde_json::to_string_pretty(&expected)
                    .map_err(|e| Failure::usage(e.to_string()))?
                    + "\n";
                io::write_atomic(&dir.join("expected.json"), json.as_bytes())?;
                Ok(manifest)
            })
            .collect()
    });
    for w in written {
        println!("{}", w?.display());
    }
    Ok(Status::Ok)
}
