//! DSP transforms checked against direct-sum oracles.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapwater_core::dsp::{
    hann_window, hz_to_mel, log_mel, mfcc, stft_magnitude, AudioBuffer, DspConfig, FeatureExtractor, LogMelSpectrogram,
    MelFilterbank,
};

/// |DFT| of a Hann-windowed frame by direct summation, bins 0..=n/2.
fn naive_dft_magnitude(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, (&x, &wi)) in frame.iter().zip(&w).enumerate() {
                let phase = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += x * wi * phase.cos();
                im += x * wi * phase.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Frame `t` of a centered, reflect-padded framing.
fn oracle_frame(x: &[f64], t: usize, n_fft: usize, hop: usize) -> Vec<f64> {
    let half = n_fft as i64 / 2;
    let n = x.len() as i64;
    (0..n_fft as i64)
        .map(|j| {
            let mut idx = t as i64 * hop as i64 + j - half;
            if idx < 0 {
                idx = -idx;
            }
            if idx >= n {
                idx = 2 * (n - 1) - idx;
            }
            x[idx as usize]
        })
        .collect()
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / 48_000.0).sin()).collect()
}

#[test]
fn stft_matches_naive_dft_on_random_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n_fft, hop) = (2048, 512);
    let x = random_signal(&mut rng, 40_000);
    let m = stft_magnitude(&AudioBuffer::new(x.clone(), 48_000), n_fft, hop);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random_range(0..m.ncols());
        let oracle = naive_dft_magnitude(&oracle_frame(&x, t, n_fft, hop));
        let scale = oracle.iter().copied().fold(0.0, f64::max);
        for (k, o) in oracle.iter().enumerate() {
            worst = worst.max((m[[k, t]] - o).abs() / scale);
        }
    }
    assert!(worst <= 1e-6, "max relative deviation {worst:e}");
}

#[test]
fn sine_peaks_at_expected_bin() {
    let x = sine(1000.0, 0.5, 48_000);
    let m = stft_magnitude(&AudioBuffer::new(x.clone(), 48_000), 2048, 512);
    let expected = (1000.0_f64 * 2048.0 / 48_000.0).round() as usize;
    assert_eq!(expected, 43);
    let argmax = |v: &[f64]| (0..v.len()).max_by(|a, b| v[*a].total_cmp(&v[*b])).unwrap();
    // frames overlapping the reflect-padded edges see a phase kink
    let interior = 2..=(x.len() - 1024) / 512;
    for t in 0..m.ncols() {
        let got = argmax(&m.column(t).to_vec());
        let oracle = argmax(&naive_dft_magnitude(&oracle_frame(&x, t, 2048, 512)));
        assert_eq!(got, oracle, "frame {t}");
        assert!(got.abs_diff(expected) <= 1, "frame {t}: {got}");
        if interior.contains(&t) {
            assert_eq!(got, expected, "frame {t}");
        }
    }
}

#[test]
fn parseval_per_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n_fft, hop) = (2048, 512);
    let x = random_signal(&mut rng, 20_000);
    let m = stft_magnitude(&AudioBuffer::new(x.clone(), 48_000), n_fft, hop);
    let w = hann_window(n_fft);
    for t in 0..m.ncols() {
        let frame = oracle_frame(&x, t, n_fft, hop);
        let time_energy: f64 = frame.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum();
        let col = m.column(t);
        let mut spec_energy = col[0].powi(2) + col[n_fft / 2].powi(2);
        spec_energy += 2.0 * (1..n_fft / 2).map(|k| col[k].powi(2)).sum::<f64>();
        let rel = (spec_energy / n_fft as f64 - time_energy).abs() / time_energy;
        assert!(rel < 1e-6, "frame {t}: {rel:e}");
    }
}

#[test]
fn log_mel_sine_row_argmax() {
    let cfg = DspConfig::default();
    let fb = MelFilterbank::from_config(&cfg).unwrap();
    let x = sine(1000.0, 0.5, 48_000);
    let lm = log_mel(&AudioBuffer::new(x.clone(), 48_000), &cfg).unwrap();

    // filterbank × naive DFT power on an interior frame
    let oracle_mag = naive_dft_magnitude(&oracle_frame(&x, 20, cfg.n_fft, cfg.hop));
    let band_power: Vec<f64> = (0..cfg.n_mels)
        .map(|m| fb.weights.row(m).iter().zip(&oracle_mag).map(|(w, a)| w * a * a).sum())
        .collect();
    let expected = (0..cfg.n_mels).max_by(|a, b| band_power[*a].total_cmp(&band_power[*b])).unwrap();

    // the band's triangle must contain 1 kHz
    let (lo, hi) = fb.support(expected);
    assert!((lo as f64 * cfg.bin_hz()) < 1000.0 && ((hi - 1) as f64 * cfg.bin_hz()) > 1000.0);
    let mel_1k = hz_to_mel(1000.0);
    assert!(mel_1k > hz_to_mel(lo as f64 * cfg.bin_hz()));

    for t in 0..lm.n_frames() {
        let col = lm.values.column(t);
        let argmax = (0..col.len()).max_by(|a, b| col[*a].total_cmp(&col[*b])).unwrap();
        assert_eq!(argmax, expected, "frame {t}");
    }
}

#[test]
fn log_mel_and_mfcc_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = DspConfig::default();
    let x = random_signal(&mut rng, 96_000);
    let loud: Vec<f64> = x.iter().map(|v| v * 0.1).collect();
    let quiet: Vec<f64> = x.iter().map(|v| v * 0.01).collect();
    let a = log_mel(&AudioBuffer::new(loud, 48_000), &cfg).unwrap();
    let b = log_mel(&AudioBuffer::new(quiet, 48_000), &cfg).unwrap();
    let max_diff = a.values.iter().zip(b.values.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(max_diff <= 1e-6, "{max_diff:e}");
    assert_eq!(a.values.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);

    let ca = mfcc(&a, 13).unwrap();
    let cb = mfcc(&b, 13).unwrap();
    let max_diff = ca.iter().zip(cb.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(max_diff <= 1e-6, "{max_diff:e}");
}

#[test]
fn mfcc_matches_direct_sum_dct() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n_mels = 64;
    let values = Array2::from_shape_fn((n_mels, 20), |_| rng.random_range(-100.0..0.0));
    let lm = LogMelSpectrogram { values: values.clone(), frame_hop_s: 0.01, window_origin_s: 0.0 };
    let c = mfcc(&lm, 13).unwrap();
    for t in 0..20 {
        for k in 0..13 {
            let scale = if k == 0 { (1.0 / n_mels as f64).sqrt() } else { (2.0 / n_mels as f64).sqrt() };
            let direct: f64 = (0..n_mels)
                .map(|n| values[[n, t]] * (PI * k as f64 * (n as f64 + 0.5) / n_mels as f64).cos())
                .sum::<f64>()
                * scale;
            let rel = (c[[k, t]] - direct).abs() / direct.abs().max(1e-12);
            assert!(rel <= 1e-9 || (c[[k, t]] - direct).abs() < 1e-9, "k={k} t={t}: {rel:e}");
        }
    }
}

fn golden_input() -> Vec<f64> {
    let mut state: u64 = 0x5eed;
    (0..96_000)
        .map(|i| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let noise = ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
            let t = i as f64 / 48_000.0;
            0.3 * (2.0 * PI * 440.0 * t).sin() + 0.1 * (2.0 * PI * 3150.0 * t).sin() + 0.05 * noise
        })
        .collect()
}

/// Layout "v1" of a fixed input, recorded as f32 bit patterns.
const GOLDEN_V1: [u32; 41] = [
    0xc39f29a7, 0x418ef8b5, 0x40aee100, 0x40cd2031, 0x412f40eb, 0x3e29a52d, 0xc18f5e97, 0xc1a8559b, 0xc13df7af,
    0xc132f905, 0xc1a66898, 0xc1a10fab, 0xc05b1c41, 0x3b629f3e, 0x3b7da03e, 0x3b39fb5a, 0x3b661080, 0x3b7a28a7,
    0x3b8e5b86, 0x3baafa8b, 0x3e42e77f, 0x3ef8e3b4, 0x3f7e1482, 0x3e069b59, 0x3ba99461, 0x45f93eb9, 0x43917897,
    0x45ee9ea7, 0x42b1b103, 0x43ea9fd4, 0x4099e357, 0x3d3f7d47, 0x3b52a34b, 0x3e66ceee, 0x3a711823, 0x405e758e,
    0x40d53eea, 0x402c2fc2, 0x40cbfa2f, 0x4043cf8c, 0x404a5858,
];

#[test]
fn v1_layout_matches_golden_vector() {
    let ex = FeatureExtractor::new(DspConfig::default()).unwrap();
    let fv = ex.extract_window(&golden_input(), 0.0).features;
    let bits: Vec<u32> = fv.values.iter().map(|v| v.to_bits()).collect();
    if std::env::var_os("TAPWATER_PRINT_GOLDEN").is_some() {
        println!("{}", bits.iter().map(|b| format!("0x{b:08x}")).collect::<Vec<_>>().join(", "));
    }
    assert_eq!(bits, GOLDEN_V1.to_vec());
}
