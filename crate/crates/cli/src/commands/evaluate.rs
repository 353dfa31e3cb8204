use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use tapwater_core::dataset::{split_lopo, split_task_a};
use tapwater_core::envelope::Model;
use tapwater_core::eval::{compare_fold_ratios, evaluate_split, Comparison, MetricsReport};

use super::train::{fit_cnn, fit_forest, load_envelope, predict_indices};
use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{read_text, write, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Stratified random 70/30 split of windows.
    A,
    /// Leave one participant out.
    Lopo,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::A => "a",
            Task::Lopo => "lopo",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub report: MetricsReport,
    pub report_json: PathBuf,
    pub report_csv: PathBuf,
    pub comparison: Option<Comparison>,
}

/// Retrains the model file's classifier, with its stored configuration, on
/// the training side of every fold and scores the test side.
pub fn evaluate(cfg: &RunConfig, model_path: &Path, task: Task, compare: Option<&Path>) -> Result<EvaluateOutcome> {
    let envelope = load_envelope(model_path)?;
    let kind = envelope.model.kind();
    let is_forest = matches!(envelope.model, Model::Forest(_));
    let ds = Dataset::load(&cfg.paths.output_dir, &cfg.target_class, is_forest, !is_forest)?;
    if envelope.dsp != ds.manifest.dsp {
        return Err(CliError::ModelMismatch(format!(
            "{} was trained with a different DSP configuration than the featurized data",
            model_path.display()
        )));
    }

    let pairs = ds.pairs();
    let plan = match task {
        Task::A => split_task_a(&pairs, cfg.split.train_fraction, cfg.sub_seed("split")),
        Task::Lopo => split_lopo(&pairs),
    }
    .map_err(|e| CliError::Training(format!("split: {e}")))?;
    let folds = plan.resolve(&ds.ids).map_err(|e| CliError::Training(format!("split: {e}")))?;

    let dir = cfg.paths.output_dir.join("reports");
    write(&dir.join(format!("split_{}.json", task.name())), plan.to_json())?;

    let predict = |fold: &tapwater_core::dataset::ResolvedFold| -> std::result::Result<Vec<bool>, String> {
        let model = match &envelope.model {
            Model::Forest(m) => fit_forest(&ds, &fold.train, &m.config).map(|(m, _)| m),
            Model::Cnn(m) => {
                let train = envelope.meta.cnn_train.clone().unwrap_or_else(|| cfg.cnn_train.clone());
                fit_cnn(&ds, &fold.train, &m.config, &train).map(|(m, _)| m)
            }
        }
        .map_err(|e| e.to_string())?;
        predict_indices(&model, &ds, &fold.test).map_err(|e| e.to_string())
    };
    let report = evaluate_split(
        kind,
        &cfg.target_class,
        plan.kind,
        &folds,
        &ds.labels,
        cfg.sub_seed("baseline"),
        cfg.eval.baseline_trials,
        predict,
    )
    .map_err(|e| CliError::Training(e.to_string()))?;

    let stem = format!("{kind}_{}", task.name());
    let report_json = dir.join(format!("{stem}.json"));
    let report_csv = dir.join(format!("{stem}.csv"));
    write(&report_json, report.to_json())?;
    write(&report_csv, report.to_csv())?;

    let comparison = match compare {
        Some(other_path) => {
            let text = read_text(other_path)?;
            let other: MetricsReport = serde_json::from_str(&text).map_err(|e| CliError::schema(other_path, e))?;
            let c = compare_fold_ratios(&report, &other).map_err(|e| CliError::schema(other_path, e))?;
            write(&dir.join(format!("{stem}_comparison.json")), serde_json::to_string_pretty(&c).expect("serializes"))?;
            Some(c)
        }
        None => None,
    };
    Ok(EvaluateOutcome { report, report_json, report_csv, comparison })
}
