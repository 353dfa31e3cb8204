use ndarray::Array2;

use super::DspConfig;

/// Per-frame spectral and temporal descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDescriptors {
    pub centroid_hz: f64,
    pub bandwidth_hz: f64,
    pub rolloff_hz: f64,
    /// Octave-band log peak/valley ratio, one entry per band.
    pub contrast: Vec<f64>,
    /// Pitch-class energy, C = 0, normalized to a maximum of 1.
    pub chroma: [f64; 12],
    /// Sign changes per sample.
    pub zcr: f64,
    pub rmse: f64,
}

/// Computes descriptors for every STFT column. `frames` are the matching
/// unwindowed time-domain frames.
///
/// Silent frames give zero centroid, bandwidth, rolloff, chroma and
/// contrast rather than NaN.
pub fn frame_descriptors<'a, I>(magnitudes: &Array2<f64>, frames: I, config: &DspConfig) -> Vec<FrameDescriptors>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let bin_hz = config.bin_hz();
    let n_bins = magnitudes.nrows();
    let freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * bin_hz).collect();
    let bands = contrast_bands(&freqs, config);
    let pitch_class: Vec<Option<usize>> = freqs
        .iter()
        .map(|&f| (f >= config.fmin_hz && f > 0.0).then(|| pitch_class_of(f)))
        .collect();

    let mut column = vec![0.0; n_bins];
    frames
        .into_iter()
        .enumerate()
        .map(|(t, frame)| {
            for (k, c) in column.iter_mut().enumerate() {
                *c = magnitudes[[k, t]];
            }
            let (centroid_hz, bandwidth_hz) = centroid_bandwidth(&column, &freqs);
            FrameDescriptors {
                centroid_hz,
                bandwidth_hz,
                rolloff_hz: rolloff(&column, &freqs, config.rolloff_fraction),
                contrast: bands.iter().map(|&(lo, hi)| band_contrast(&column[lo..hi], config.contrast_quantile)).collect(),
                chroma: chroma(&column, &pitch_class),
                zcr: zero_crossing_rate(frame),
                rmse: (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt(),
            }
        })
        .collect()
}

fn centroid_bandwidth(mag: &[f64], freqs: &[f64]) -> (f64, f64) {
    let total: f64 = mag.iter().sum();
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let centroid = mag.iter().zip(freqs).map(|(m, f)| m * f).sum::<f64>() / total;
    let var = mag.iter().zip(freqs).map(|(m, f)| m * (f - centroid).powi(2)).sum::<f64>() / total;
    (centroid, var.sqrt())
}

fn rolloff(mag: &[f64], freqs: &[f64], fraction: f64) -> f64 {
    let total: f64 = mag.iter().map(|m| m * m).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let target = fraction * total;
    let mut acc = 0.0;
    for (m, &f) in mag.iter().zip(freqs) {
        acc += m * m;
        if acc >= target {
            return f;
        }
    }
    *freqs.last().unwrap_or(&0.0)
}

/// Bin ranges `[lo, hi)` of the octave bands starting at `contrast_fmin_hz`.
fn contrast_bands(freqs: &[f64], config: &DspConfig) -> Vec<(usize, usize)> {
    let nyquist = *freqs.last().unwrap_or(&0.0);
    (0..config.n_contrast_bands)
        .map(|b| {
            let lo_hz = config.contrast_fmin_hz * 2f64.powi(b as i32);
            let hi_hz = (lo_hz * 2.0).min(nyquist);
            let lo = freqs.iter().position(|&f| f >= lo_hz).unwrap_or(freqs.len() - 1);
            let last = b + 1 == config.n_contrast_bands;
            let hi = freqs
                .iter()
                .position(|&f| if last { f > hi_hz } else { f >= hi_hz })
                .unwrap_or(freqs.len());
            (lo, hi.max(lo + 1).min(freqs.len()))
        })
        .collect()
}

fn band_contrast(band: &[f64], quantile: f64) -> f64 {
    const EPS: f64 = 1e-10;
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((quantile * sorted.len() as f64).round() as usize).clamp(1, sorted.len());
    let valley = sorted[..k].iter().sum::<f64>() / k as f64;
    let peak = sorted[sorted.len() - k..].iter().sum::<f64>() / k as f64;
    ((peak + EPS) / (valley + EPS)).ln()
}

fn pitch_class_of(f: f64) -> usize {
    let semitones_from_a4 = (12.0 * (f / 440.0).log2()).round() as i64;
    (semitones_from_a4 + 9).rem_euclid(12) as usize
}

fn chroma(mag: &[f64], pitch_class: &[Option<usize>]) -> [f64; 12] {
    let mut out = [0.0; 12];
    for (m, pc) in mag.iter().zip(pitch_class) {
        if let Some(pc) = pc {
            out[*pc] += m * m;
        }
    }
    let peak = out.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    out
}

fn zero_crossing_rate(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let crossings = frame.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
    crossings as f64 / frame.len() as f64
}
