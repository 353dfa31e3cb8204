use std::path::{Path, PathBuf};

use tapwater_core::dsp::{load_wav, resample_to, to_pgm, FeatureExtractor};
use tapwater_core::storage::SpectrogramStack;

use crate::config::RunConfig;
use crate::data::FeatureManifest;
use crate::error::{read, write, CliError, Result};

pub enum SpectrogramSource<'a> {
    /// Computed from a WAV file with the configured DSP settings.
    Wav(&'a Path),
    /// Read from featurized output, `<participant>/<recording_id>`.
    Recording(&'a str),
}

/// Writes one 8-bit grayscale PGM per window (or only `window`) to
/// `<out>/images/`.
pub fn export_spectrogram(cfg: &RunConfig, source: SpectrogramSource, window: Option<usize>) -> Result<Vec<PathBuf>> {
    let dir = cfg.paths.output_dir.join("images");
    let hop_s = cfg.dsp.hop as f64 / cfg.dsp.sample_rate_hz as f64;
    let (stem, specs) = match source {
        SpectrogramSource::Wav(path) => {
            let extractor = FeatureExtractor::new(cfg.dsp.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            let mut audio = load_wav(&read(path)?).map_err(|e| CliError::schema(path, e))?;
            if audio.sample_rate_hz != cfg.dsp.sample_rate_hz {
                audio = resample_to(&audio, cfg.dsp.sample_rate_hz);
            }
            let win = cfg.dsp.window_samples();
            let specs: Vec<_> = audio
                .samples
                .chunks(win)
                .enumerate()
                .map(|(i, c)| extractor.extract_window(c, i as f64 * cfg.dsp.window_s).logmel)
                .collect();
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
            (stem, specs)
        }
        SpectrogramSource::Recording(id) => {
            let manifest = FeatureManifest::load(&cfg.paths.output_dir)?;
            let entry = manifest
                .recordings
                .iter()
                .find(|r| format!("{}/{}", r.participant_id, r.recording_id) == id || r.recording_id == id)
                .ok_or_else(|| CliError::missing(Path::new(id), "recording not in the featurized manifest"))?;
            let path = cfg.paths.output_dir.join(&entry.spectrograms);
            let stack = SpectrogramStack::decode(&read(&path)?).map_err(|e| CliError::schema(&path, e))?;
            let specs = (0..stack.len()).map(|i| stack.spectrogram(i, hop_s, i as f64 * manifest.dsp.window_s)).collect();
            (entry.recording_id.clone(), specs)
        }
    };
    if let Some(w) = window {
        if w >= specs.len() {
            return Err(CliError::Usage(format!("window {w} out of range, recording has {}", specs.len())));
        }
    }
    let mut written = Vec::new();
    for (i, spec) in specs.iter().enumerate().filter(|(i, _)| window.is_none_or(|w| w == *i)) {
        let path = dir.join(format!("{stem}_w{i:04}.pgm"));
        write(&path, to_pgm(spec))?;
        written.push(path);
    }
    Ok(written)
}
