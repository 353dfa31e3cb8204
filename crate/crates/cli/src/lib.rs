//! Command-line orchestration for the tap-water toolkit: annotation
//! statistics and validation, featurization, training, evaluation,
//! streaming detection and spectrogram export.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tapwater_core::synth::SynthConfig;

use commands::{ModelKind, SpectrogramSource, StreamInput, Task};
pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "tapwater", version, about = "Tap-water sound detection toolkit")]
pub struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Positive class, overriding the configuration.
    #[arg(long = "target-class", global = true)]
    pub target_class: Option<String>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Duration and IoU/coverage tables of the annotations.
    Stats,
    /// Overlapping, contained and short same-class annotations.
    Validate,
    /// Window, label and featurize every recording.
    Featurize {
        /// Also write a CSV of each feature file.
        #[arg(long)]
        csv: bool,
    },
    /// Train a classifier on all featurized windows.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Model file path (default `<out>/models/<model>.tapm`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Per-fold retraining and scoring on Task A or leave-one-participant-out.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        /// Earlier report to compare per-fold ratios against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Score a recording window by window as line-delimited JSON.
    Stream {
        #[arg(long)]
        model: PathBuf,
        /// WAV file, or `-` for mono s16le PCM on stdin.
        #[arg(long)]
        input: String,
        /// Sample rate of stdin PCM (default: the model's).
        #[arg(long)]
        rate: Option<u32>,
        /// Smoothing window (odd), overriding the configuration.
        #[arg(long)]
        k: Option<usize>,
        /// Write events here instead of stdout.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Grayscale PGM images of log-mel windows.
    ExportSpectrogram {
        #[arg(long, conflicts_with = "recording", required_unless_present = "recording")]
        input: Option<PathBuf>,
        /// Featurized recording, `<participant>/<recording_id>`.
        #[arg(long)]
        recording: Option<String>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Write a seeded synthetic corpus and a matching configuration.
    Synth {
        #[arg(long, default_value_t = 9)]
        participants: usize,
        #[arg(long, default_value_t = 2)]
        recordings: usize,
        /// 2 s segments per recording.
        #[arg(long, default_value_t = 20)]
        segments: usize,
        #[arg(long, default_value_t = 48_000)]
        rate: u32,
    },
}

impl Cli {
    /// The configuration file (or defaults) with command-line overrides.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(class) = &self.target_class {
            cfg.target_class = class.clone();
        }
        if let Some(out) = &self.out {
            cfg.paths.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Stdout writes that tolerate a closed pipe, e.g. `tapwater validate | head`.
macro_rules! out {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes")
}

/// Runs one command, printing its results to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    match cli.command {
        Command::Stats => {
            let report = commands::stats(&cfg)?;
            out!("{}", report.table());
        }
        Command::Validate => {
            let report = commands::validate(&cfg)?;
            outln!("{}", json(&report));
        }
        Command::Featurize { csv } => {
            let manifest = commands::featurize(&cfg, csv)?;
            let windows: usize = manifest.recordings.iter().map(|r| r.n_windows).sum();
            outln!("{} recordings, {} windows, {} skipped", manifest.recordings.len(), windows, manifest.skipped.len());
            for (class, c) in &manifest.totals {
                outln!("  {class}: {} positive ({:.4})", c.positives, c.prevalence);
            }
        }
        Command::Train { model, output } => {
            let outcome = commands::train(&cfg, model, output.as_deref())?;
            let m = &outcome.log.training_metrics;
            outln!(
                "wrote {} (crc32 {}); training f1 {:.4}, accuracy {:.4}",
                outcome.model_path.display(),
                outcome.log.checksum,
                m.f1,
                m.accuracy
            );
        }
        Command::Evaluate { model, task, compare } => {
            let outcome = commands::evaluate(&cfg, &model, task, compare.as_deref())?;
            out!("{}", outcome.report.to_csv());
            if let Some(c) = &outcome.comparison {
                outln!("{}", json(c));
            }
        }
        Command::Stream { model, input, rate, k, events } => {
            let k = k.unwrap_or(cfg.stream.smoothing_k);
            let source = if input == "-" {
                let rate = match rate {
                    Some(r) => r,
                    None => commands::load_envelope(&model)?.dsp.sample_rate_hz,
                };
                StreamInput::Pcm { reader: Box::new(std::io::stdin().lock()), sample_rate_hz: rate }
            } else {
                StreamInput::Wav(std::path::Path::new(&input))
            };
            let summary = match events {
                Some(path) => {
                    let mut buf = Vec::new();
                    let s = commands::stream(&cfg, &model, source, k, &mut buf)?;
                    error::write(&path, buf)?;
                    s
                }
                None => commands::stream(&cfg, &model, source, k, &mut std::io::stdout().lock())?,
            };
            eprintln!("{}", serde_json::to_string(&summary).expect("serializes"));
        }
        Command::ExportSpectrogram { input, recording, window } => {
            let source = match (&input, &recording) {
                (Some(p), _) => SpectrogramSource::Wav(p),
                (None, Some(r)) => SpectrogramSource::Recording(r),
                (None, None) => return Err(CliError::Usage("pass --input or --recording".into())),
            };
            for p in commands::export_spectrogram(&cfg, source, window)? {
                outln!("{}", p.display());
            }
        }
        Command::Synth { participants, recordings, segments, rate } => {
            let synth = SynthConfig {
                n_participants: participants,
                recordings_per_participant: recordings,
                segments_per_recording: segments,
                sample_rate_hz: rate,
                seed: cfg.seed,
                ..SynthConfig::default()
            };
            let path = commands::write_synth_corpus(&cfg.paths.output_dir, &synth, &cfg)?;
            outln!("wrote {}", path.display());
        }
    }
    std::io::stdout().flush().ok();
    Ok(())
}
