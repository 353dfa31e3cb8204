//! Audio decoding and framed spectral representations.
//!
//! All parameters live in [`DspConfig`]; its defaults are the canonical
//! settings used by the detectors (48 kHz, 2048-point Hann STFT with hop
//! 512, 64 HTK mel bands from 50 Hz to 24 kHz, 13 MFCCs).

mod descriptors;
mod features;
mod image;
mod mel;
mod stft;
mod wav;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use descriptors::{frame_descriptors, FrameDescriptors};
pub use features::{aggregate_features, FeatureExtractor, FeatureLayout, FeatureVector, WindowFeatures, V1_LEN};
pub use image::to_pgm;
pub use mel::{hz_to_mel, log_mel, mel_to_hz, mfcc, LogMelSpectrogram, MelFilterbank};
pub use stft::{frame_count, hann_window, stft_magnitude, Stft};
pub use wav::{encode_wav_f32, encode_wav_i16, load_wav};

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("wav decode error: {0}")]
    Decode(String),
    #[error("unsupported audio format: {0}")]
    Unsupported(String),
    #[error("invalid dsp configuration: {0}")]
    Config(String),
}

/// Mono audio scaled to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self { samples, sample_rate_hz }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Linear-interpolation resampling. Returns a copy when the rate already
/// matches.
pub fn resample_to(buffer: &AudioBuffer, target_hz: u32) -> AudioBuffer {
    assert!(target_hz > 0, "target sample rate must be positive");
    if buffer.sample_rate_hz == target_hz || buffer.samples.is_empty() {
        return AudioBuffer::new(buffer.samples.clone(), target_hz);
    }
    let ratio = buffer.sample_rate_hz as f64 / target_hz as f64;
    let n_out = (buffer.samples.len() as f64 / ratio).round() as usize;
    let last = buffer.samples.len() - 1;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            if k >= last {
                return buffer.samples[last];
            }
            let frac = pos - k as f64;
            buffer.samples[k] * (1.0 - frac) + buffer.samples[k + 1] * frac
        })
        .collect();
    AudioBuffer::new(samples, target_hz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub n_mfcc: usize,
    /// Cumulative energy fraction defining the rolloff frequency.
    pub rolloff_fraction: f64,
    pub n_contrast_bands: usize,
    /// Lower edge of the first octave band used for spectral contrast.
    pub contrast_fmin_hz: f64,
    /// Fraction of bins averaged for the peak and valley of each band.
    pub contrast_quantile: f64,
    /// Classification window length in seconds.
    pub window_s: f64,
    /// Power floor applied before taking logarithms.
    pub log_floor: f64,
    pub layout: FeatureLayout,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 48_000,
            n_fft: 2048,
            hop: 512,
            n_mels: 64,
            fmin_hz: 50.0,
            fmax_hz: 24_000.0,
            n_mfcc: 13,
            rolloff_fraction: 0.85,
            n_contrast_bands: 6,
            contrast_fmin_hz: 200.0,
            contrast_quantile: 0.02,
            window_s: 2.0,
            log_floor: 1e-10,
            layout: FeatureLayout::V1,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        let bad = |msg: String| Err(DspError::Config(msg));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 4 {
            return bad(format!("n_fft {} must be a power of two >= 4", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return bad(format!("hop {} must be in 1..={}", self.hop, self.n_fft));
        }
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyquist) {
            return bad(format!(
                "frequency bounds {}..{} Hz invalid for nyquist {nyquist} Hz",
                self.fmin_hz, self.fmax_hz
            ));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return bad(format!("need 1 <= n_mfcc ({}) <= n_mels ({})", self.n_mfcc, self.n_mels));
        }
        if !(self.rolloff_fraction > 0.0 && self.rolloff_fraction <= 1.0) {
            return bad("rolloff fraction must be in (0, 1]".into());
        }
        if self.n_contrast_bands == 0 || self.contrast_fmin_hz <= 0.0 || self.contrast_fmin_hz >= nyquist {
            return bad("contrast bands need a positive start below nyquist".into());
        }
        if !(self.contrast_quantile > 0.0 && self.contrast_quantile <= 0.5) {
            return bad("contrast quantile must be in (0, 0.5]".into());
        }
        if !(self.window_s > 0.0) || !(self.log_floor > 0.0) {
            return bad("window length and log floor must be positive".into());
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * self.sample_rate_hz as f64).round() as usize
    }

    /// STFT frames per classification window.
    pub fn frames_per_window(&self) -> usize {
        frame_count(self.window_samples(), self.hop)
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.n_fft as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, rate: u32, seconds: f64) -> AudioBuffer {
        let n = (seconds * rate as f64).round() as usize;
        AudioBuffer::new(
            (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            rate,
        )
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn resample_identity_is_bitwise() {
        let b = sine(100.0, 0.3, 48_000, 0.1);
        assert_eq!(resample_to(&b, 48_000), b);
    }

    #[test]
    fn resample_preserves_duration_and_rms() {
        let b = AudioBuffer::new(vec![0.1; 24_000], 24_000);
        let up = resample_to(&b, 48_000);
        assert!((up.samples.len() as i64 - 48_000).abs() <= 1);

        let s = sine(100.0, 0.8, 44_100, 1.0);
        let r = resample_to(&s, 48_000);
        let expected = 0.8 / 2f64.sqrt();
        assert!((rms(&r.samples) - expected).abs() / expected < 0.01);
        assert!((r.duration_s() - s.duration_s()).abs() <= 1.0 / 48_000.0);
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = DspConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.window_samples(), 96_000);
        assert_eq!(cfg.frames_per_window(), 188);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = DspConfig { fmax_hz: 30_000.0, ..DspConfig::default() };
        assert!(matches!(cfg.validate(), Err(DspError::Config(_))));
        cfg = DspConfig { n_fft: 1000, ..DspConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = DspConfig { n_mfcc: 80, ..DspConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
