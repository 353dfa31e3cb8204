//! Tap-water audio detection toolkit.
//!
//! Annotation interval statistics, window-level audio features, a random
//! forest and a small CNN detector, evaluation utilities and a portable
//! model envelope for streaming inference.

pub mod annotations;
pub mod codec;
pub mod dsp;
pub mod envelope;
pub mod forest;
pub mod neural;
pub mod smoothing;
pub mod dataset;
pub mod eval;
pub mod storage;
pub mod synth;

/// Detector output for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Positive-class score in [0, 1].
    pub score: f64,
    /// `score >= 0.5`.
    pub label: bool,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        Self { score, label: score >= 0.5 }
    }
}
