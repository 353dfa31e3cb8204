use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{max_pool2, max_pool2_backward, relu_backward, relu_inplace, Conv2d, Linear};
use super::{NeuralError, Scalar, Tensor};
use crate::codec::{ByteReader, ByteWriter, CodecError};

/// Network shape and input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub n_mels: usize,
    pub n_frames: usize,
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub hidden: usize,
    /// Inputs are mapped to `(db + input_offset_db) · input_scale`, so the
    /// max-referenced range [-100, 0] dB becomes [-1, 1].
    pub input_offset_db: f64,
    pub input_scale: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            n_frames: 188,
            channels: vec![8, 16, 32, 32, 64],
            hidden: 64,
            input_offset_db: 50.0,
            input_scale: 0.02,
        }
    }
}

impl CnnConfig {
    /// Spatial size entering each block, followed by the size after the
    /// last pooling.
    pub fn spatial_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.n_mels, self.n_frames)];
        for _ in &self.channels {
            let (h, w) = *dims.last().unwrap();
            dims.push((h / 2, w / 2));
        }
        dims
    }

    pub fn input_len(&self) -> usize {
        self.n_mels * self.n_frames
    }

    pub fn flat_len(&self) -> usize {
        let (h, w) = *self.spatial_dims().last().unwrap();
        h * w * self.channels.last().copied().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.hidden == 0 {
            return Err(NeuralError::Config("channels and hidden width must be positive".into()));
        }
        let (h, w) = *self.spatial_dims().last().unwrap();
        if h == 0 || w == 0 {
            return Err(NeuralError::Config(format!(
                "input {}×{} vanishes after {} poolings",
                self.n_mels,
                self.n_frames,
                self.channels.len()
            )));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0 && self.input_offset_db.is_finite()) {
            return Err(NeuralError::Config("input scaling must be finite and positive".into()));
        }
        Ok(())
    }

    /// Scales a mel-major log-mel matrix into network input.
    pub fn normalize<T: Scalar>(&self, db: &[f32]) -> Vec<T> {
        db.iter().map(|&v| T::of((v as f64 + self.input_offset_db) * self.input_scale)).collect()
    }
}

/// Activations of one sample kept for the backward pass.
#[derive(Debug, Clone)]
struct SampleCache<T> {
    /// Input of every block, then the final pooled map.
    acts: Vec<Vec<T>>,
    /// ReLU outputs of every conv block.
    relu: Vec<Vec<T>>,
    pool_idx: Vec<Vec<u32>>,
    hidden: Vec<T>,
}

/// The spectrogram CNN. `forward` records activations that a following
/// `backward` consumes.
#[derive(Debug, Clone)]
pub struct Cnn<T> {
    pub config: CnnConfig,
    pub convs: Vec<Conv2d<T>>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    cache: Option<Vec<SampleCache<T>>>,
}

pub type CnnModel = Cnn<f32>;

impl<T: Scalar> PartialEq for Cnn<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params().iter().zip(other.params()).all(|(a, b)| a.values == b.values)
    }
}

impl<T: Scalar> Cnn<T> {
    fn build(config: CnnConfig, mut conv: impl FnMut(usize, usize) -> Conv2d<T>, mut lin: impl FnMut(usize, usize) -> Linear<T>) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut convs = Vec::with_capacity(config.channels.len());
        let mut cin = 1;
        for &c in &config.channels {
            convs.push(conv(cin, c));
            cin = c;
        }
        let fc1 = lin(config.flat_len(), config.hidden);
        let fc2 = lin(config.hidden, 1);
        Ok(Self { config, convs, fc1, fc2, cache: None })
    }

    /// He-uniform weights and zero biases from `seed`.
    pub fn new(config: CnnConfig, seed: u64) -> Result<Self, NeuralError> {
        let rng = std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed));
        Self::build(
            config,
            |i, o| Conv2d::he_uniform(i, o, &mut *rng.borrow_mut()),
            |i, o| Linear::he_uniform(i, o, &mut *rng.borrow_mut()),
        )
    }

    pub fn zeros(config: CnnConfig) -> Result<Self, NeuralError> {
        Self::build(config, Conv2d::zeros, Linear::zeros)
    }

    /// Parameters in serialization order: each conv weight and bias, then
    /// the two linear layers.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = self.convs.iter().flat_map(|c| [&c.weight, &c.bias]).collect();
        v.extend([&self.fc1.weight, &self.fc1.bias, &self.fc2.weight, &self.fc2.bias]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = self.convs.iter_mut().flat_map(|c| [&mut c.weight, &mut c.bias]).collect();
        v.extend([&mut self.fc1.weight, &mut self.fc1.bias, &mut self.fc2.weight, &mut self.fc2.bias]);
        v
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    fn check_input(&self, x: &[T]) -> Result<(), NeuralError> {
        if x.len() != self.config.input_len() {
            return Err(NeuralError::Shape(format!(
                "expected a 1×{}×{} input ({} values), got {}",
                self.config.n_mels,
                self.config.n_frames,
                self.config.input_len(),
                x.len()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &[T]) -> (T, SampleCache<T>) {
        let dims = self.config.spatial_dims();
        let mut acts = Vec::with_capacity(self.convs.len() + 1);
        let mut relu = Vec::with_capacity(self.convs.len());
        let mut pool_idx = Vec::with_capacity(self.convs.len());
        let mut cur = x.to_vec();
        for (b, conv) in self.convs.iter().enumerate() {
            let (h, w) = dims[b];
            let mut y = conv.forward(&cur, h, w);
            relu_inplace(&mut y);
            let (pooled, idx) = max_pool2(&y, conv.out_channels, h, w);
            acts.push(std::mem::replace(&mut cur, pooled));
            relu.push(y);
            pool_idx.push(idx);
        }
        let mut hidden = self.fc1.forward(&cur);
        relu_inplace(&mut hidden);
        let logit = self.fc2.forward(&hidden)[0];
        acts.push(cur);
        (logit, SampleCache { acts, relu, pool_idx, hidden })
    }

    /// Logit of one normalized input without recording activations.
    pub fn logit(&self, x: &[T]) -> Result<T, NeuralError> {
        self.check_input(x)?;
        Ok(self.run(x).0)
    }

    /// Logits of a batch; activations are kept for [`Cnn::backward`].
    pub fn forward(&mut self, batch: &[&[T]]) -> Result<Vec<T>, NeuralError> {
        for x in batch {
            self.check_input(x)?;
        }
        let (logits, caches): (Vec<T>, Vec<SampleCache<T>>) = batch.iter().map(|x| self.run(x)).unzip();
        self.cache = Some(caches);
        Ok(logits)
    }

    /// Accumulates parameter gradients for the last forward batch given
    /// `dL/dlogit` per sample.
    pub fn backward(&mut self, d_logits: &[T]) -> Result<(), NeuralError> {
        let caches = self
            .cache
            .take()
            .ok_or_else(|| NeuralError::Usage("backward called without a preceding forward".into()))?;
        if caches.len() != d_logits.len() {
            return Err(NeuralError::Shape(format!("{} logit gradients for a batch of {}", d_logits.len(), caches.len())));
        }
        let dims = self.config.spatial_dims();
        for (c, &dz) in caches.iter().zip(d_logits) {
            let mut dh = vec![T::zero(); self.config.hidden];
            self.fc2.backward(&c.hidden, &[dz], Some(&mut dh));
            relu_backward(&c.hidden, &mut dh);
            let flat = c.acts.last().unwrap();
            let mut d = vec![T::zero(); flat.len()];
            self.fc1.backward(flat, &dh, Some(&mut d));
            for b in (0..self.convs.len()).rev() {
                let (h, w) = dims[b];
                let mut dy = max_pool2_backward(&d, &c.pool_idx[b], c.relu[b].len());
                relu_backward(&c.relu[b], &mut dy);
                if b > 0 {
                    let mut dx = vec![T::zero(); c.acts[b].len()];
                    self.convs[b].backward(&c.acts[b], h, w, &dy, Some(&mut dx));
                    d = dx;
                } else {
                    self.convs[b].backward(&c.acts[b], h, w, &dy, None);
                }
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Cnn<U> {
        let convs = self
            .convs
            .iter()
            .map(|c| Conv2d { in_channels: c.in_channels, out_channels: c.out_channels, weight: c.weight.cast(), bias: c.bias.cast() })
            .collect();
        let lin = |l: &Linear<T>| Linear { in_dim: l.in_dim, out_dim: l.out_dim, weight: l.weight.cast(), bias: l.bias.cast() };
        Cnn { config: self.config.clone(), convs, fc1: lin(&self.fc1), fc2: lin(&self.fc2), cache: None }
    }

    /// Payload of the `CNN1` envelope section: the config as a JSON blob,
    /// a tensor count (u16), then per parameter tensor its rank (u8), its
    /// dimensions (u32 each) and its values as f32, all little-endian.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.blob(serde_json::to_string(&self.config).expect("config serializes").as_bytes());
        let params = self.params();
        w.u16(params.len() as u16);
        for p in params {
            w.u8(p.shape.len() as u8);
            for &d in &p.shape {
                w.u32(d as u32);
            }
            for v in &p.values {
                w.f32(v.f64() as f32);
            }
        }
        w.buf
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, NeuralError> {
        let bad = |m: String| NeuralError::Codec(CodecError::Invalid(m));
        let mut r = ByteReader::new(bytes);
        let config: CnnConfig = serde_json::from_slice(r.blob()?).map_err(|e| bad(format!("cnn config: {e}")))?;
        let mut model = Self::zeros(config)?;
        let n = r.u16()? as usize;
        let mut params = model.params_mut();
        if n != params.len() {
            return Err(bad(format!("expected {} tensors, found {n}", params.len())));
        }
        for p in params.iter_mut() {
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            if shape != p.shape {
                return Err(bad(format!("tensor shape {shape:?} does not match expected {:?}", p.shape)));
            }
            p.values = r.f32_vec(p.len())?.into_iter().map(|v| T::of(v as f64)).collect();
        }
        r.finish()?;
        Ok(model)
    }
}
