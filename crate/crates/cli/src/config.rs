//! Run configuration loaded from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tapwater_core::dsp::DspConfig;
use tapwater_core::forest::ForestConfig;
use tapwater_core::neural::{CnnConfig, TrainConfig};

use crate::error::{read_text, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Annotation files; `.jsonl`/`.ndjson` are JSON lines, anything else CSV.
    pub annotations: Vec<PathBuf>,
    /// Holds `<participant>/<recording_id>.wav`.
    pub audio_root: PathBuf,
    pub output_dir: PathBuf,
    /// Optional CSV `participant_id,recording_id,path` replacing discovery.
    pub audio_manifest: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            annotations: vec![PathBuf::from("annotations.csv")],
            audio_root: PathBuf::from("audio"),
            output_dir: PathBuf::from("out"),
            audio_manifest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub baseline_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { baseline_trials: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Odd majority-vote window, in classification windows.
    pub smoothing_k: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self { smoothing_k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub target_class: String,
    /// Second class for duration ratios and overlap tables.
    pub reference_class: String,
    /// Root seed; every random stream derives from it by name.
    pub seed: u64,
    /// Fraction of a window that must be positive for a positive label.
    pub overlap_threshold: f64,
    /// Fragments shorter than this are reported by `validate` and excluded
    /// from the "at least" duration columns of `stats`.
    pub min_fragment_s: f64,
    pub dsp: DspConfig,
    pub forest: ForestConfig,
    /// `n_mels` and `n_frames` are overwritten from the DSP settings.
    pub cnn: CnnConfig,
    pub cnn_train: TrainConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
    pub stream: StreamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            target_class: "tap water".into(),
            reference_class: "water".into(),
            seed: 0,
            overlap_threshold: 0.5,
            min_fragment_s: 3.0,
            dsp: DspConfig::default(),
            forest: ForestConfig::default(),
            cnn: CnnConfig::default(),
            cnn_train: TrainConfig { epochs: 5, batch_size: 16, ..TrainConfig::default() },
            split: SplitConfig::default(),
            eval: EvalConfig::default(),
            stream: StreamConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses by extension: `.json` as JSON, anything else as TOML.
    /// Relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::schema(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::schema(path, e))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// CNN architecture with its input shape taken from the DSP settings.
    pub fn cnn_config(&self) -> CnnConfig {
        CnnConfig { n_mels: self.dsp.n_mels, n_frames: self.dsp.frames_per_window(), ..self.cnn.clone() }
    }

    pub fn sub_seed(&self, name: &str) -> u64 {
        sub_seed(self.seed, name)
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.annotations.iter_mut().for_each(fix);
        fix(&mut self.audio_root);
        fix(&mut self.output_dir);
        if let Some(m) = self.audio_manifest.as_mut() {
            fix(m);
        }
    }
}

/// Independent seed for the named stream (`split`, `forest`, `cnn`,
/// `baseline`): splitmix64 of the root mixed with the FNV-1a hash of the name.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (root ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
