use serde::{Deserialize, Serialize};

use super::{NeuralError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of positive-label terms; negatives weigh 1.
    pub pos_weight: f64,
}

impl LossConfig {
    /// `n_neg / n_pos` of the training labels.
    pub fn from_labels(labels: &[bool]) -> Result<Self, NeuralError> {
        let n_pos = labels.iter().filter(|&&y| y).count();
        let n_neg = labels.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(NeuralError::SingleClass);
        }
        Ok(Self { pos_weight: n_neg as f64 / n_pos as f64 })
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    let z = z.f64();
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    T::of(s)
}

/// Mean of `w(y) · (softplus(z) − y·z)` with `w(1) = pos_weight`, `w(0) = 1`.
pub fn weighted_bce<T: Scalar>(logits: &[T], labels: &[bool], cfg: &LossConfig) -> T {
    weighted_bce_with_grad(logits, labels, cfg).0
}

/// Loss and its gradient with respect to each logit.
pub fn weighted_bce_with_grad<T: Scalar>(logits: &[T], labels: &[bool], cfg: &LossConfig) -> (T, Vec<T>) {
    assert_eq!(logits.len(), labels.len(), "one label per logit");
    let n = logits.len().max(1) as f64;
    let mut total = 0.0;
    let grads = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let (z, t) = (z.f64(), if y { 1.0 } else { 0.0 });
            let w = if y { cfg.pos_weight } else { 1.0 };
            total += w * (softplus(z) - t * z);
            T::of(w * (sigmoid(z) - t) / n)
        })
        .collect();
    (T::of(total / n), grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_values() {
        let ln2 = std::f64::consts::LN_2;
        let l: f64 = weighted_bce(&[0.0], &[true], &LossConfig { pos_weight: 1.0 });
        assert!((l - ln2).abs() < 1e-15);
        let l: f64 = weighted_bce(&[0.0], &[true], &LossConfig { pos_weight: 3.0 });
        assert!((l - 3.0 * ln2).abs() < 1e-15);
        assert!((l - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn extremes_are_finite() {
        let cfg = LossConfig { pos_weight: 4.0 };
        for z in [-1e4, -50.0, 50.0, 1e4] {
            for y in [false, true] {
                let l: f64 = weighted_bce(&[z], &[y], &cfg);
                assert!(l.is_finite());
                assert!(l <= z.abs() * cfg.pos_weight + 1.0);
            }
        }
        // the naive form overflows where the stable one does not
        let naive = |z: f64| -> f64 { (1.0 + z.exp()).ln() };
        assert!(naive(1e4).is_infinite());
        assert!(softplus(1e4).is_finite());
    }

    #[test]
    fn sigmoid_symmetry() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        for z in [-30.0f64, -2.5, 0.1, 7.0, 40.0] {
            assert!((sigmoid(-z) - (1.0 - sigmoid(z))).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_scales_with_pos_weight() {
        let (_, g1) = weighted_bce_with_grad(&[0.3f64], &[true], &LossConfig { pos_weight: 1.0 });
        let (_, g2) = weighted_bce_with_grad(&[0.3f64], &[true], &LossConfig { pos_weight: 2.0 });
        assert!((g2[0] - 2.0 * g1[0]).abs() < 1e-15);
    }

    #[test]
    fn pos_weight_from_labels() {
        let labels: Vec<bool> = (0..10).map(|i| i < 2).collect();
        assert_eq!(LossConfig::from_labels(&labels).unwrap().pos_weight, 4.0);
        assert_eq!(LossConfig::from_labels(&[false, false]), Err(NeuralError::SingleClass));
    }
}
