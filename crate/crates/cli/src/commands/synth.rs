use std::path::{Path, PathBuf};

use tapwater_core::dsp::encode_wav_i16;
use tapwater_core::synth::{annotations_csv, generate_corpus, SynthConfig};

use crate::config::{Paths, RunConfig};
use crate::error::{write, Result};

pub const CONFIG_FILE: &str = "tapwater.toml";

/// Writes a synthetic corpus under `dir`: `audio/<participant>/<id>.wav`,
/// `annotations.csv`, and a run configuration pointing at both.
pub fn write_synth_corpus(dir: &Path, synth: &SynthConfig, base: &RunConfig) -> Result<PathBuf> {
    let corpus = generate_corpus(synth);
    for r in &corpus {
        let path = dir.join("audio").join(&r.participant_id).join(format!("{}.wav", r.recording_id));
        write(&path, encode_wav_i16(&r.audio))?;
    }
    write(&dir.join("annotations.csv"), annotations_csv(&corpus))?;

    let mut cfg = base.clone();
    cfg.paths = Paths {
        annotations: vec![PathBuf::from("annotations.csv")],
        audio_root: PathBuf::from("audio"),
        output_dir: PathBuf::from("out"),
        audio_manifest: None,
    };
    cfg.dsp.sample_rate_hz = synth.sample_rate_hz;
    cfg.dsp.fmax_hz = cfg.dsp.fmax_hz.min(synth.sample_rate_hz as f64 / 2.0);
    let path = dir.join(CONFIG_FILE);
    write(&path, cfg.to_toml())?;
    Ok(path)
}
