use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::AudioBuffer;

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of centered frames for a signal of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Short-time Fourier transform with centered, reflect-padded frames.
#[derive(Clone)]
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("n_fft", &self.n_fft).field("hop", &self.hop).finish()
    }
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        assert!(n_fft.is_power_of_two() && hop >= 1 && hop <= n_fft);
        Self {
            n_fft,
            hop,
            window: hann_window(n_fft),
            fft: FftPlanner::new().plan_fft_forward(n_fft),
        }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Pads the signal by `n_fft / 2` on each side. Signals too short to
    /// reflect are zero-extended to `n_fft` first.
    pub fn pad(&self, samples: &[f64]) -> Vec<f64> {
        let half = self.n_fft / 2;
        let mut signal = samples.to_vec();
        if signal.len() <= half {
            signal.resize(self.n_fft, 0.0);
        }
        let n = signal.len();
        let mut out = Vec::with_capacity(n + 2 * half);
        out.extend((1..=half).rev().map(|k| signal[k]));
        out.extend_from_slice(&signal);
        out.extend((1..=half).map(|k| signal[n - 1 - k]));
        out
    }

    /// Unwindowed time-domain frames, aligned with the STFT columns.
    pub fn frames<'a>(&self, padded: &'a [f64], len: usize) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (n_fft, hop) = (self.n_fft, self.hop);
        let len = if len <= n_fft / 2 { n_fft } else { len };
        (0..frame_count(len, hop)).map(move |t| &padded[t * hop..t * hop + n_fft])
    }

    /// Magnitude spectrogram, `(n_fft/2 + 1) × n_frames`.
    pub fn magnitude(&self, samples: &[f64]) -> Array2<f64> {
        let padded = self.pad(samples);
        let frames: Vec<&[f64]> = self.frames(&padded, samples.len()).collect();
        let mut out = Array2::<f64>::zeros((self.n_bins(), frames.len()));
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (t, frame) in frames.into_iter().enumerate() {
            for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
                *b = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, c) in buf.iter().take(self.n_bins()).enumerate() {
                out[[k, t]] = c.norm();
            }
        }
        out
    }
}

/// One-sided STFT magnitude of a Hann-windowed, centered framing.
pub fn stft_magnitude(buffer: &AudioBuffer, n_fft: usize, hop: usize) -> Array2<f64> {
    Stft::new(n_fft, hop).magnitude(&buffer.samples)
}
