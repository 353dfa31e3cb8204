use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use tapwater_core::envelope::{EnvelopeMeta, Model, ModelEnvelope};
use tapwater_core::eval::{confusion, metrics, Metrics};
use tapwater_core::forest::{train_forest_timed, ForestConfig, ForestError};
use tapwater_core::neural::{predict_cnn, train_cnn, CnnConfig, NeuralError, TrainConfig};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{read, write, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Cnn,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestLog {
    pub per_tree_ms: Vec<f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnLog {
    pub pos_weight: f64,
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub model: ModelKind,
    pub target_class: String,
    pub n_windows: usize,
    pub n_positive: usize,
    pub seed: u64,
    /// Metrics of the trained model on its own training windows.
    pub training_metrics: Metrics,
    pub forest: Option<ForestLog>,
    pub cnn: Option<CnnLog>,
    /// CRC-32 trailer of the written model file.
    pub checksum: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub log: TrainLog,
}

pub(crate) fn forest_error(e: ForestError) -> CliError {
    match e {
        ForestError::Config(m) => CliError::Config(m),
        other => CliError::Training(other.to_string()),
    }
}

pub(crate) fn neural_error(e: NeuralError) -> CliError {
    match e {
        NeuralError::Config(m) => CliError::Config(m),
        other => CliError::Training(other.to_string()),
    }
}

pub(crate) fn fit_forest(ds: &Dataset, idx: &[usize], config: &ForestConfig) -> Result<(Model, Vec<std::time::Duration>)> {
    let xs: Vec<_> = idx.iter().map(|&i| ds.features[i].clone()).collect();
    let ys: Vec<bool> = idx.iter().map(|&i| ds.labels[i]).collect();
    let (m, t) = train_forest_timed(&xs, &ys, config).map_err(forest_error)?;
    Ok((Model::Forest(m), t))
}

pub(crate) fn fit_cnn(ds: &Dataset, idx: &[usize], config: &CnnConfig, train: &TrainConfig) -> Result<(Model, CnnLog)> {
    let xs: Vec<&[f32]> = idx.iter().map(|&i| ds.logmel[i].as_slice()).collect();
    let ys: Vec<bool> = idx.iter().map(|&i| ds.labels[i]).collect();
    let (m, log) = train_cnn(&xs, &ys, config, train).map_err(neural_error)?;
    Ok((Model::Cnn(m), CnnLog { pos_weight: log.pos_weight, epoch_loss: log.epoch_loss }))
}

pub(crate) fn predict_indices(model: &Model, ds: &Dataset, idx: &[usize]) -> Result<Vec<bool>> {
    idx.iter()
        .map(|&i| match model {
            Model::Forest(m) => m.predict(&ds.features[i]).map(|p| p.label).map_err(forest_error),
            Model::Cnn(m) => predict_cnn(m, &ds.logmel[i]).map(|p| p.label).map_err(neural_error),
        })
        .collect()
}

pub fn default_model_path(cfg: &RunConfig, kind: ModelKind) -> PathBuf {
    cfg.paths.output_dir.join("models").join(format!("{}.tapm", kind.name()))
}

/// Trains on every featurized window of the target class and writes the
/// model envelope and a JSON training log next to it.
pub fn train(cfg: &RunConfig, kind: ModelKind, output: Option<&Path>) -> Result<TrainOutcome> {
    let ds = Dataset::load(&cfg.paths.output_dir, &cfg.target_class, kind == ModelKind::Forest, kind == ModelKind::Cnn)?;
    if ds.manifest.dsp != cfg.dsp {
        return Err(CliError::ModelMismatch("featurized data was produced with a different DSP configuration".into()));
    }
    let all: Vec<usize> = (0..ds.labels.len()).collect();
    let mut meta = EnvelopeMeta {
        target_class: cfg.target_class.clone(),
        seed: cfg.seed,
        overlap_threshold: ds.manifest.overlap_threshold,
        cnn_train: None,
    };
    let (model, forest_log, cnn_log) = match kind {
        ModelKind::Forest => {
            let config = ForestConfig { seed: cfg.sub_seed("forest"), ..cfg.forest.clone() };
            let (model, timings) = fit_forest(&ds, &all, &config)?;
            let per_tree_ms: Vec<f64> = timings.iter().map(|t| t.as_secs_f64() * 1e3).collect();
            let total_ms = per_tree_ms.iter().sum();
            (model, Some(ForestLog { per_tree_ms, total_ms }), None)
        }
        ModelKind::Cnn => {
            let train = TrainConfig { seed: cfg.sub_seed("cnn"), ..cfg.cnn_train.clone() };
            meta.cnn_train = Some(train.clone());
            let (model, log) = fit_cnn(&ds, &all, &cfg.cnn_config(), &train)?;
            (model, None, Some(log))
        }
    };
    let predictions = predict_indices(&model, &ds, &all)?;
    let training_metrics = metrics(&confusion(&predictions, &ds.labels).map_err(|e| CliError::Training(e.to_string()))?);

    let envelope = ModelEnvelope { dsp: cfg.dsp.clone(), meta, model };
    let bytes = envelope.encode();
    let checksum = format!("{:08x}", u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("four bytes")));
    let model_path = output.map(Path::to_path_buf).unwrap_or_else(|| default_model_path(cfg, kind));
    write(&model_path, &bytes)?;

    let log = TrainLog {
        model: kind,
        target_class: cfg.target_class.clone(),
        n_windows: ds.labels.len(),
        n_positive: ds.labels.iter().filter(|&&y| y).count(),
        seed: cfg.seed,
        training_metrics,
        forest: forest_log,
        cnn: cnn_log,
        checksum,
    };
    let log_path = model_path.with_extension("log.json");
    write(&log_path, serde_json::to_string_pretty(&log).expect("serializes"))?;
    Ok(TrainOutcome { model_path, log_path, log })
}

/// Reads and verifies a model file. Corrupt or foreign files are a model
/// mismatch.
pub fn load_envelope(path: &Path) -> Result<ModelEnvelope> {
    let bytes = read(path)?;
    ModelEnvelope::decode(&bytes).map_err(|e| CliError::ModelMismatch(format!("{}: {e}", path.display())))
}
