use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mel::{dct_matrix, log_mel_from_magnitude};
use super::{frame_descriptors, DspConfig, DspError, FrameDescriptors, LogMelSpectrogram, MelFilterbank, Stft};

/// Length of the `v1` feature vector.
pub const V1_LEN: usize = 41;

/// Layout of the aggregated window feature vector.
///
/// `V1` (41 entries, in order):
/// - 13 MFCC means
/// - 12 chroma means
/// - mean and sd of centroid, bandwidth, rolloff, zcr, rmse (10, interleaved
///   as `centroid_mean, centroid_sd, bandwidth_mean, ...`)
/// - 6 spectral contrast band means
///
/// `Full` applies mean, sd, min, max and median to every per-frame series
/// (MFCCs, chroma, the five scalar descriptors, contrast bands), series-major.
///
/// Neither layout includes a "cover" descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureLayout {
    V1,
    Full,
}

impl FeatureLayout {
    pub fn tag(&self) -> &'static str {
        match self {
            FeatureLayout::V1 => "v1",
            FeatureLayout::Full => "full-v1",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "v1" => Some(FeatureLayout::V1),
            "full-v1" => Some(FeatureLayout::Full),
            _ => None,
        }
    }

    pub fn len(&self, config: &DspConfig) -> usize {
        let series = config.n_mfcc + 12 + 5 + config.n_contrast_bands;
        match self {
            FeatureLayout::V1 => config.n_mfcc + 12 + 10 + config.n_contrast_bands,
            FeatureLayout::Full => series * 5,
        }
    }

    /// Column names in vector order, e.g. `mfcc3_mean`, `chroma_C#_mean`,
    /// `rolloff_sd`, `contrast2_mean`.
    pub fn column_names(&self, config: &DspConfig) -> Vec<String> {
        const PITCH: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];
        const SCALARS: [&str; 5] = ["centroid", "bandwidth", "rolloff", "zcr", "rmse"];
        let mfcc = (0..config.n_mfcc).map(|k| format!("mfcc{k}"));
        let chroma = PITCH.iter().map(|p| format!("chroma_{p}"));
        let contrast = (0..config.n_contrast_bands).map(|b| format!("contrast{b}"));
        match self {
            FeatureLayout::V1 => mfcc
                .chain(chroma)
                .map(|s| format!("{s}_mean"))
                .chain(SCALARS.iter().flat_map(|s| [format!("{s}_mean"), format!("{s}_sd")]))
                .chain(contrast.map(|s| format!("{s}_mean")))
                .collect(),
            FeatureLayout::Full => mfcc
                .chain(chroma)
                .chain(SCALARS.iter().map(|s| s.to_string()))
                .chain(contrast)
                .flat_map(|s| ["mean", "sd", "min", "max", "median"].map(|stat| format!("{s}_{stat}")))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
fn sd(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Aggregates per-frame MFCCs and descriptors of one window.
pub fn aggregate_features(mfccs: &Array2<f64>, descriptors: &[FrameDescriptors], layout: FeatureLayout) -> FeatureVector {
    let n_bands = descriptors.first().map_or(0, |d| d.contrast.len());
    let mut series: Vec<Vec<f64>> = mfccs.rows().into_iter().map(|r| r.to_vec()).collect();
    for pc in 0..12 {
        series.push(descriptors.iter().map(|d| d.chroma[pc]).collect());
    }
    let scalars: [fn(&FrameDescriptors) -> f64; 5] = [
        |d| d.centroid_hz,
        |d| d.bandwidth_hz,
        |d| d.rolloff_hz,
        |d| d.zcr,
        |d| d.rmse,
    ];
    let scalar_series: Vec<Vec<f64>> = scalars.iter().map(|f| descriptors.iter().map(f).collect()).collect();
    let contrast_series: Vec<Vec<f64>> = (0..n_bands).map(|b| descriptors.iter().map(|d| d.contrast[b]).collect()).collect();

    let mut values = Vec::new();
    match layout {
        FeatureLayout::V1 => {
            values.extend(series.iter().map(|s| mean(s)));
            for s in &scalar_series {
                values.push(mean(s));
                values.push(sd(s));
            }
            values.extend(contrast_series.iter().map(|s| mean(s)));
        }
        FeatureLayout::Full => {
            for s in series.iter().chain(&scalar_series).chain(&contrast_series) {
                let min = s.iter().copied().fold(f64::INFINITY, f64::min);
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                values.extend([mean(s), sd(s), if s.is_empty() { 0.0 } else { min }, if s.is_empty() { 0.0 } else { max }, median(s)]);
            }
        }
    }
    FeatureVector {
        values: values.into_iter().map(|v| v as f32).collect(),
        layout,
    }
}

/// Features of one classification window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub logmel: LogMelSpectrogram,
    pub features: FeatureVector,
    /// The window was shorter than `window_s` and zero-padded at the tail.
    pub padded: bool,
}

/// Precomputed transforms for repeated window extraction. Immutable and
/// shareable across threads.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: DspConfig,
    stft: Stft,
    filterbank: MelFilterbank,
    dct: Array2<f64>,
}

impl FeatureExtractor {
    pub fn new(config: DspConfig) -> Result<Self, DspError> {
        config.validate()?;
        Ok(Self {
            stft: Stft::new(config.n_fft, config.hop),
            filterbank: MelFilterbank::from_config(&config)?,
            dct: dct_matrix(config.n_mfcc, config.n_mels),
            config,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Extracts one window. Input shorter than the window length is
    /// zero-padded; longer input is truncated.
    pub fn extract_window(&self, samples: &[f64], origin_s: f64) -> WindowFeatures {
        let n = self.config.window_samples();
        let padded = samples.len() < n;
        let window: Vec<f64> = if samples.len() == n {
            samples.to_vec()
        } else {
            let mut w = samples[..samples.len().min(n)].to_vec();
            w.resize(n, 0.0);
            w
        };

        let mag = self.stft.magnitude(&window);
        let logmel = LogMelSpectrogram {
            values: log_mel_from_magnitude(&mag, &self.filterbank, self.config.log_floor),
            frame_hop_s: self.config.hop as f64 / self.config.sample_rate_hz as f64,
            window_origin_s: origin_s,
        };
        let mfccs = self.dct.dot(&logmel.values);
        let frames_src = self.stft.pad(&window);
        let descriptors = frame_descriptors(&mag, self.stft.frames(&frames_src, window.len()), &self.config);
        let features = aggregate_features(&mfccs, &descriptors, self.config.layout);
        WindowFeatures { logmel, features, padded }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn v1_has_41_entries() {
        let ex = FeatureExtractor::new(DspConfig::default()).unwrap();
        let w = ex.extract_window(&noise(96_000, 3), 0.0);
        assert_eq!(w.features.len(), V1_LEN);
        assert_eq!(FeatureLayout::V1.len(ex.config()), V1_LEN);
        assert!(w.features.values.iter().all(|v| v.is_finite()));
        assert_eq!(w.logmel.values.dim(), (64, 188));
        assert!(!w.padded);
    }

    #[test]
    fn silence_window() {
        let ex = FeatureExtractor::new(DspConfig::default()).unwrap();
        let w = ex.extract_window(&vec![0.0; 96_000], 4.0);
        assert!(w.features.values.iter().all(|&v| v == 0.0));
        assert_eq!(w.logmel.window_origin_s, 4.0);
    }

    #[test]
    fn identical_windows_identical_vectors() {
        let ex = FeatureExtractor::new(DspConfig::default()).unwrap();
        let x = noise(96_000, 9);
        let a = ex.extract_window(&x, 0.0);
        let b = ex.extract_window(&x, 0.0);
        let bits = |v: &FeatureVector| v.values.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.features), bits(&b.features));
    }

    #[test]
    fn short_window_padded_and_flagged() {
        let ex = FeatureExtractor::new(DspConfig::default()).unwrap();
        let w = ex.extract_window(&noise(30_000, 1), 0.0);
        assert!(w.padded);
        assert_eq!(w.logmel.n_frames(), 188);
    }

    #[test]
    fn full_layout_length() {
        let cfg = DspConfig { layout: FeatureLayout::Full, ..DspConfig::default() };
        let ex = FeatureExtractor::new(cfg).unwrap();
        let w = ex.extract_window(&noise(96_000, 5), 0.0);
        assert_eq!(w.features.len(), 36 * 5);
        assert_eq!(w.features.layout.tag(), "full-v1");
    }

    #[test]
    fn column_names_match_lengths() {
        let cfg = DspConfig::default();
        let v1 = FeatureLayout::V1.column_names(&cfg);
        assert_eq!(v1.len(), V1_LEN);
        assert_eq!(v1[0], "mfcc0_mean");
        assert_eq!(v1[13], "chroma_C_mean");
        assert_eq!(&v1[25..27], &["centroid_mean", "centroid_sd"]);
        assert_eq!(v1[40], "contrast5_mean");
        assert_eq!(FeatureLayout::Full.column_names(&cfg).len(), 180);
    }

    #[test]
    fn aggregation_order() {
        let mfccs = Array2::from_shape_fn((13, 2), |(k, t)| (k * 10 + t) as f64);
        let d = |x: f64| FrameDescriptors {
            centroid_hz: x,
            bandwidth_hz: 2.0 * x,
            rolloff_hz: 3.0 * x,
            contrast: vec![x; 6],
            chroma: [x; 12],
            zcr: 0.5,
            rmse: x,
        };
        let v = aggregate_features(&mfccs, &[d(1.0), d(3.0)], FeatureLayout::V1).values;
        assert_eq!(v[0], 0.5);
        assert_eq!(v[12], 120.5);
        assert_eq!(v[13], 2.0);
        assert_eq!(&v[25..35], &[2.0, 1.0, 4.0, 2.0, 6.0, 3.0, 0.5, 0.0, 2.0, 1.0]);
        assert_eq!(v[40], 2.0);
    }
}
