//! Annotation loading, audio discovery and the featurized-data manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tapwater_core::annotations::{parse_annotations, AnnotationFormat, AnnotationRecord};
use tapwater_core::dataset::SampleId;
use tapwater_core::dsp::{DspConfig, FeatureVector};
use tapwater_core::storage::{FeatureTable, SpectrogramStack};

use crate::config::RunConfig;
use crate::error::{read, read_text, CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

fn format_for(path: &Path) -> AnnotationFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "ndjson") => AnnotationFormat::JsonLines,
        _ => AnnotationFormat::Csv,
    }
}

/// Concatenated records of every configured annotation file.
pub fn load_annotations(cfg: &RunConfig) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for path in &cfg.paths.annotations {
        let text = read_text(path)?;
        out.extend(parse_annotations(&text, format_for(path)).map_err(|e| CliError::schema(path, e))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AudioSource {
    pub participant_id: String,
    pub recording_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    participant_id: String,
    recording_id: String,
    path: PathBuf,
}

/// Recordings to featurize, sorted by participant then recording.
///
/// Without an audio manifest this is every annotated recording plus every
/// `<audio_root>/<participant>/<recording>.wav`; annotated recordings
/// without a file are kept so the caller can report them.
pub fn discover_audio(cfg: &RunConfig, records: &[AnnotationRecord]) -> Result<Vec<AudioSource>> {
    if let Some(manifest) = &cfg.paths.audio_manifest {
        let text = read_text(manifest)?;
        let base = manifest.parent().unwrap_or(Path::new(""));
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut out = BTreeSet::new();
        for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
            let row = row.map_err(|e| CliError::schema(manifest, format!("line {}: {e}", i + 2)))?;
            let path = if row.path.is_relative() { base.join(&row.path) } else { row.path };
            out.insert(AudioSource { participant_id: row.participant_id, recording_id: row.recording_id, path });
        }
        return Ok(out.into_iter().collect());
    }

    let root = &cfg.paths.audio_root;
    let wav_path = |p: &str, r: &str| root.join(p).join(format!("{r}.wav"));
    let mut found: BTreeSet<(String, String)> = tapwater_core::annotations::recordings(records);
    if let Ok(dirs) = std::fs::read_dir(root) {
        for dir in dirs.flatten().filter(|d| d.path().is_dir()) {
            let participant = dir.file_name().to_string_lossy().into_owned();
            for f in std::fs::read_dir(dir.path()).into_iter().flatten().flatten() {
                let p = f.path();
                if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                    if let Some(stem) = p.file_stem() {
                        found.insert((participant.clone(), stem.to_string_lossy().into_owned()));
                    }
                }
            }
        }
    }
    Ok(found
        .into_iter()
        .map(|(p, r)| AudioSource { path: wav_path(&p, &r), participant_id: p, recording_id: r })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub positives: usize,
    pub windows: usize,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub participant_id: String,
    pub recording_id: String,
    pub duration_s: f64,
    pub n_windows: usize,
    /// Paths relative to the output directory.
    pub features: String,
    pub spectrograms: String,
    /// Per class, one `0`/`1` character per window.
    pub labels: BTreeMap<String, String>,
}

impl RecordingEntry {
    pub fn labels_for(&self, class: &str) -> Option<Vec<bool>> {
        self.labels.get(class).map(|s| s.bytes().map(|b| b == b'1').collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub participant_id: String,
    pub recording_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub format_version: u32,
    pub dsp: DspConfig,
    pub overlap_threshold: f64,
    pub classes: Vec<String>,
    pub recordings: Vec<RecordingEntry>,
    pub totals: BTreeMap<String, ClassCount>,
    pub skipped: Vec<Skipped>,
}

impl FeatureManifest {
    pub fn load(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join(MANIFEST_FILE);
        let text = read_text(&path)?;
        let m: FeatureManifest = serde_json::from_str(&text).map_err(|e| CliError::schema(&path, e))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(CliError::schema(&path, format!("unsupported manifest version {}", m.format_version)));
        }
        Ok(m)
    }
}

/// Windows of every featurized recording, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: FeatureManifest,
    pub class: String,
    pub ids: Vec<SampleId>,
    pub labels: Vec<bool>,
    pub features: Vec<FeatureVector>,
    /// Mel-major log-mel matrices in dB.
    pub logmel: Vec<Vec<f32>>,
}

impl Dataset {
    pub fn load(out_dir: &Path, class: &str, features: bool, logmel: bool) -> Result<Self> {
        let manifest = FeatureManifest::load(out_dir)?;
        if !manifest.classes.iter().any(|c| c == class) {
            return Err(CliError::schema(
                &out_dir.join(MANIFEST_FILE),
                format!("class {class:?} not among featurized classes {:?}", manifest.classes),
            ));
        }
        let mut ds = Dataset {
            class: class.to_string(),
            ids: Vec::new(),
            labels: Vec::new(),
            features: Vec::new(),
            logmel: Vec::new(),
            manifest: manifest.clone(),
        };
        for rec in &manifest.recordings {
            let labels = rec.labels_for(class).expect("class checked above");
            if features {
                let path = out_dir.join(&rec.features);
                let table = FeatureTable::decode(&read(&path)?).map_err(|e| CliError::schema(&path, e))?;
                if table.len() != rec.n_windows {
                    return Err(CliError::schema(&path, format!("{} rows, manifest says {}", table.len(), rec.n_windows)));
                }
                ds.features.extend((0..table.len()).map(|i| table.vector(i)));
            }
            if logmel {
                let path = out_dir.join(&rec.spectrograms);
                let stack = SpectrogramStack::decode(&read(&path)?).map_err(|e| CliError::schema(&path, e))?;
                if stack.len() != rec.n_windows {
                    return Err(CliError::schema(&path, format!("{} items, manifest says {}", stack.len(), rec.n_windows)));
                }
                ds.logmel.extend((0..stack.len()).map(|i| stack.item(i).to_vec()));
            }
            for (i, label) in labels.into_iter().enumerate() {
                ds.ids.push(SampleId {
                    participant_id: rec.participant_id.clone(),
                    recording_id: rec.recording_id.clone(),
                    window_index: i,
                });
                ds.labels.push(label);
            }
        }
        Ok(ds)
    }

    pub fn pairs(&self) -> Vec<(SampleId, bool)> {
        self.ids.iter().cloned().zip(self.labels.iter().copied()).collect()
    }
}
