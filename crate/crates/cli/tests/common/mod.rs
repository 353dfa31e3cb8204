#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tapwater_cli::commands::write_synth_corpus;
use tapwater_cli::config::RunConfig;
use tapwater_core::synth::SynthConfig;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tapwater"))
}

/// Runs the binary from the config's directory with `--config <config>`
/// followed by `args`.
pub fn run(config: &Path, args: &[&str]) -> Output {
    let dir = config.parent().expect("config has a directory");
    bin().current_dir(dir).arg("--config").arg(config).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small synthetic corpus under `dir`, dense in tap and pour segments.
/// Returns the written config path and the loaded configuration.
pub fn corpus(dir: &Path, participants: usize, recordings: usize, segments: usize, seed: u64) -> (PathBuf, RunConfig) {
    let synth = SynthConfig {
        n_participants: participants,
        recordings_per_participant: recordings,
        segments_per_recording: segments,
        tap_fraction: 0.3,
        pour_fraction: 0.1,
        seed,
        ..SynthConfig::default()
    };
    let base = RunConfig { seed, ..RunConfig::default() };
    let path = write_synth_corpus(dir, &synth, &base).expect("corpus written");
    let cfg = RunConfig::load(&path).expect("config loads");
    (path, cfg)
}

pub fn write_config(path: &Path, cfg: &RunConfig) {
    std::fs::write(path, cfg.to_toml()).unwrap();
}
