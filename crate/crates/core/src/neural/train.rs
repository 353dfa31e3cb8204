use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{weighted_bce_with_grad, AdamConfig, AdamState, CnnConfig, CnnModel, LossConfig, NeuralError};
use crate::dsp::LogMelSpectrogram;
use crate::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 32, adam: AdamConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub pos_weight: f64,
    /// Mean training loss of each epoch, measured during the epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains the CNN on mel-major log-mel matrices (dB, as stored in
/// spectrogram files). The positive class weight is `n_neg / n_pos` of
/// `labels`; weights are He-uniform from `seed` and every epoch visits the
/// samples in a fresh seeded order. Returns the final-epoch model.
pub fn train_cnn(
    inputs: &[&[f32]],
    labels: &[bool],
    config: &CnnConfig,
    train: &TrainConfig,
) -> Result<(CnnModel, TrainLog), NeuralError> {
    if inputs.len() != labels.len() {
        return Err(NeuralError::Shape(format!("{} inputs but {} labels", inputs.len(), labels.len())));
    }
    if train.batch_size == 0 {
        return Err(NeuralError::Config("batch size must be positive".into()));
    }
    let loss_cfg = LossConfig::from_labels(labels)?;
    let mut model = CnnModel::new(config.clone(), train.seed)?;
    if let Some(x) = inputs.iter().find(|x| x.len() != config.input_len()) {
        return Err(NeuralError::Shape(format!("input of {} values, expected {}", x.len(), config.input_len())));
    }
    let normalized: Vec<Vec<f32>> = inputs.iter().map(|x| config.normalize(x)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(train.adam);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = TrainLog { pos_weight: loss_cfg.pos_weight, epoch_loss: Vec::with_capacity(train.epochs) };
    for _ in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(train.batch_size) {
            let batch: Vec<&[f32]> = chunk.iter().map(|&i| normalized[i].as_slice()).collect();
            let ys: Vec<bool> = chunk.iter().map(|&i| labels[i]).collect();
            let logits = model.forward(&batch)?;
            let (loss, dz) = weighted_bce_with_grad(&logits, &ys, &loss_cfg);
            total += loss as f64 * chunk.len() as f64;
            model.zero_grad();
            model.backward(&dz)?;
            adam.step(&mut model.params_mut())?;
        }
        log.epoch_loss.push(total / inputs.len() as f64);
    }
    Ok((model, log))
}

/// Score `sigmoid(logit)` and label at 0.5 for one log-mel matrix in dB.
pub fn predict_cnn(model: &CnnModel, db: &[f32]) -> Result<Prediction, NeuralError> {
    let x: Vec<f32> = model.config.normalize(db);
    let z = model.logit(&x)?;
    Ok(Prediction::from_score(super::sigmoid(z as f64)))
}

impl CnnModel {
    pub fn predict_spectrogram(&self, spec: &LogMelSpectrogram) -> Result<Prediction, NeuralError> {
        let db: Vec<f32> = spec.values.iter().map(|&v| v as f32).collect();
        predict_cnn(self, &db)
    }
}
