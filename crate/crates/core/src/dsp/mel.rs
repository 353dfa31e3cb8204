use ndarray::Array2;

use super::{AudioBuffer, DspConfig, DspError, Stft};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Area-normalized triangular filters with centers equally spaced in mel.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_fft: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// `n_mels × (n_fft/2 + 1)`, nonnegative.
    pub weights: Array2<f64>,
    /// Nonzero bin range `[lo, hi)` of each row.
    supports: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn new(sample_rate_hz: u32, n_fft: usize, n_mels: usize, fmin_hz: f64, fmax_hz: f64) -> Result<Self, DspError> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if n_mels == 0 || n_fft < 2 || !(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= nyquist) {
            return Err(DspError::Config(format!(
                "mel filterbank needs n_mels >= 1 and 0 <= fmin ({fmin_hz}) < fmax ({fmax_hz}) <= {nyquist}"
            )));
        }
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate_hz as f64 / n_fft as f64;
        let (mlo, mhi) = (hz_to_mel(fmin_hz), hz_to_mel(fmax_hz));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = Array2::zeros((n_mels, n_bins));
        let mut supports = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (hi - lo);
            let mut support: Option<(usize, usize)> = None;
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center)).max(0.0);
                if w > 0.0 {
                    weights[[m, k]] = w * norm;
                    support = Some(support.map_or((k, k + 1), |(a, _)| (a, k + 1)));
                }
            }
            match support {
                Some(s) => supports.push(s),
                None => {
                    return Err(DspError::Config(format!(
                        "mel band {m} ({lo:.1}-{hi:.1} Hz) contains no FFT bin; use fewer mels or a larger n_fft"
                    )))
                }
            }
        }
        Ok(Self {
            n_mels,
            n_fft,
            fmin_hz,
            fmax_hz,
            weights,
            supports,
        })
    }

    pub fn from_config(cfg: &DspConfig) -> Result<Self, DspError> {
        Self::new(cfg.sample_rate_hz, cfg.n_fft, cfg.n_mels, cfg.fmin_hz, cfg.fmax_hz)
    }

    pub fn support(&self, band: usize) -> (usize, usize) {
        self.supports[band]
    }

    /// `weights · power`, for a `(n_bins × n_frames)` power spectrogram.
    pub fn apply(&self, power: &Array2<f64>) -> Array2<f64> {
        let n_frames = power.ncols();
        let mut out = Array2::zeros((self.n_mels, n_frames));
        for m in 0..self.n_mels {
            let (lo, hi) = self.supports[m];
            for t in 0..n_frames {
                out[[m, t]] = (lo..hi).map(|k| self.weights[[m, k]] * power[[k, t]]).sum();
            }
        }
        out
    }
}

/// Log-power mel spectrogram of one window, referenced so that the
/// loudest cell is 0 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    /// `n_mels × n_frames`.
    pub values: Array2<f64>,
    pub frame_hop_s: f64,
    pub window_origin_s: f64,
}

impl LogMelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// `10·log10(max(mel power, floor))`, shifted so the window maximum is 0 dB.
pub(crate) fn log_mel_from_magnitude(
    magnitude: &Array2<f64>,
    filterbank: &MelFilterbank,
    floor: f64,
) -> Array2<f64> {
    let power = magnitude.mapv(|m| m * m);
    let mut db = filterbank.apply(&power).mapv(|p| 10.0 * p.max(floor).log10());
    let peak = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak.is_finite() {
        db.mapv_inplace(|v| v - peak);
    }
    db
}

pub fn log_mel(buffer: &AudioBuffer, config: &DspConfig) -> Result<LogMelSpectrogram, DspError> {
    config.validate()?;
    let stft = Stft::new(config.n_fft, config.hop);
    let fb = MelFilterbank::from_config(config)?;
    let mag = stft.magnitude(&buffer.samples);
    Ok(LogMelSpectrogram {
        values: log_mel_from_magnitude(&mag, &fb, config.log_floor),
        frame_hop_s: config.hop as f64 / buffer.sample_rate_hz as f64,
        window_origin_s: 0.0,
    })
}

/// Orthonormal DCT-II basis, `n_coeffs × n`.
pub(crate) fn dct_matrix(n_coeffs: usize, n: usize) -> Array2<f64> {
    let mut basis = Array2::zeros((n_coeffs, n));
    for k in 0..n_coeffs {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            basis[[k, i]] = scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    basis
}

/// MFCCs: orthonormal DCT-II along the mel axis, first `n_coeffs` rows.
pub fn mfcc(logmel: &LogMelSpectrogram, n_coeffs: usize) -> Result<Array2<f64>, DspError> {
    if n_coeffs == 0 || n_coeffs > logmel.n_mels() {
        return Err(DspError::Config(format!(
            "n_coeffs {n_coeffs} must be in 1..={}",
            logmel.n_mels()
        )));
    }
    Ok(dct_matrix(n_coeffs, logmel.n_mels()).dot(&logmel.values))
}
