use serde::{Deserialize, Serialize};

use super::{NeuralError, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One bias-corrected update of every parameter from its gradient.
    /// A parameter without a gradient buffer is treated as having zero
    /// gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<(), NeuralError> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(NeuralError::Shape("parameter list changed between Adam steps".into()));
        }
        self.t += 1;
        let c = self.config;
        let corr1 = 1.0 - c.beta1.powi(self.t as i32);
        let corr2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step = T::of(c.learning_rate / corr1);
        let inv_sqrt_corr2 = T::of(1.0 / corr2.sqrt());
        let eps = T::of(c.epsilon);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.grad.as_ref() else { continue };
            for k in 0..g.len() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
            }
            for k in 0..p.values.len() {
                let denom = v[k].sqrt() * inv_sqrt_corr2 + eps;
                p.values[k] = p.values[k] - step * m[k] / denom;
            }
        }
        Ok(())
    }
}
