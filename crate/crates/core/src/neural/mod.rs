//! A small reverse-mode engine for the spectrogram CNN.
//!
//! The network is fixed: five blocks of 3×3 same-padded convolution, ReLU
//! and 2×2 max pooling, then a hidden fully connected layer with ReLU and a
//! single output logit. Layers are generic over [`Scalar`] so gradient
//! checks can run in 64-bit while training uses 32-bit.

mod adam;
mod layers;
mod loss;
mod model;
mod train;

use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

use crate::codec::CodecError;

pub use adam::{AdamConfig, AdamState};
pub use layers::{max_pool2, max_pool2_backward, relu_backward, relu_inplace, Conv2d, Linear};
pub use loss::{sigmoid, weighted_bce, weighted_bce_with_grad, LossConfig};
pub use model::{Cnn, CnnConfig, CnnModel};
pub use train::{predict_cnn, train_cnn, TrainConfig, TrainLog};

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training data needs both classes")]
    SingleClass,
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("malformed network payload: {0}")]
    Codec(#[from] CodecError),
}

pub trait Scalar: Float + FromPrimitive + ToPrimitive + AddAssign + Default + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense array with an optional gradient buffer of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), values: vec![T::zero(); shape.iter().product()], grad: None }
    }

    pub fn from_vec(shape: &[usize], values: Vec<T>) -> Result<Self, NeuralError> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(NeuralError::Shape(format!("shape {shape:?} needs {n} values, got {}", values.len())));
        }
        Ok(Self { shape: shape.to_vec(), values, grad: None })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Gradient buffer, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Converts values to another precision, dropping the gradient.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), values: self.values.iter().map(|v| U::of(v.f64())).collect(), grad: None }
    }
}
