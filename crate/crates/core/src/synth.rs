//! Seeded synthetic kitchen recordings for end-to-end checks.
//!
//! Each recording is a sequence of 2 s segments over a room-noise bed.
//! Tap-water segments are 1–8 kHz band-limited noise shaped by a
//! per-participant resonance and gurgle rate. Other segments hold mains
//! hum, near-silence, white-noise clicks, or a low-band pouring sound that
//! is annotated as water but not as tap water. Tap runs start and end on
//! the 2 s grid so window labels are unambiguous.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationRecord;
use crate::dsp::AudioBuffer;

pub const TAP_WATER: &str = "tap water";
pub const WATER: &str = "water";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate_hz: u32,
    pub n_participants: usize,
    pub recordings_per_participant: usize,
    pub segments_per_recording: usize,
    pub segment_s: f64,
    /// Expected fraction of segments holding tap water.
    pub tap_fraction: f64,
    /// Expected fraction of segments holding the non-tap pouring sound.
    pub pour_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 48_000,
            n_participants: 9,
            recordings_per_participant: 2,
            segments_per_recording: 20,
            segment_s: 2.0,
            tap_fraction: 0.1,
            pour_fraction: 0.05,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub participant_id: String,
    pub recording_id: String,
    pub audio: AudioBuffer,
    pub annotations: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment {
    Tap,
    Pour,
    Hum,
    Silence,
    Clicks,
    Room,
}

/// Per-participant sound character.
#[derive(Debug, Clone, Copy)]
struct Timbre {
    resonance_hz: f64,
    resonance_q: f64,
    gurgle_hz: f64,
    room_cutoff_hz: f64,
    mains_hz: f64,
}

impl Timbre {
    fn for_participant(p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7417_b3e5);
        rng.set_stream(1000 + p as u64);
        Self {
            resonance_hz: 1500.0 + 4500.0 * (p as f64 + rng.random_range(0.0..0.5)) / 9.5,
            resonance_q: rng.random_range(1.0..4.0),
            gurgle_hz: rng.random_range(3.0..12.0),
            room_cutoff_hz: rng.random_range(150.0..600.0),
            mains_hz: if p.is_multiple_of(2) { 50.0 } else { 60.0 },
        }
    }
}

/// RBJ cookbook biquad, direct form I.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn new(b: [f64; 3], a0: f64, a: [f64; 2]) -> Self {
        Self { b: b.map(|v| v / a0), a: a.map(|v| v / a0), x: [0.0; 2], y: [0.0; 2] }
    }

    fn params(f0: f64, q: f64, rate: f64) -> (f64, f64) {
        let w0 = 2.0 * std::f64::consts::PI * f0 / rate;
        (w0.cos(), w0.sin() / (2.0 * q))
    }

    fn lowpass(f0: f64, q: f64, rate: f64) -> Self {
        let (c, alpha) = Self::params(f0, q, rate);
        Self::new([(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0], 1.0 + alpha, [-2.0 * c, 1.0 - alpha])
    }

    fn highpass(f0: f64, q: f64, rate: f64) -> Self {
        let (c, alpha) = Self::params(f0, q, rate);
        Self::new([(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0], 1.0 + alpha, [-2.0 * c, 1.0 - alpha])
    }

    /// Constant 0 dB peak gain band-pass.
    fn bandpass(f0: f64, q: f64, rate: f64) -> Self {
        let (c, alpha) = Self::params(f0, q, rate);
        Self::new([alpha, 0.0, -alpha], 1.0 + alpha, [-2.0 * c, 1.0 - alpha])
    }

    fn run(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1] - self.a[0] * self.y[0] - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

fn chain(filters: &mut [Biquad], x: f64) -> f64 {
    filters.iter_mut().fold(x, |v, f| f.run(v))
}

fn white(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn normalize_to(x: &mut [f64], target_rms: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target_rms / r);
    }
}

fn render_segment(kind: Segment, n: usize, rate: f64, t: &Timbre, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    match kind {
        Segment::Tap => {
            let mut band = [
                Biquad::highpass(1000.0, 0.707, rate),
                Biquad::highpass(1000.0, 0.707, rate),
                Biquad::lowpass(8000.0, 0.707, rate),
                Biquad::lowpass(8000.0, 0.707, rate),
            ];
            let mut peak = Biquad::bandpass(t.resonance_hz, t.resonance_q, rate);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            for (i, o) in out.iter_mut().enumerate() {
                let b = chain(&mut band, white(rng));
                let shaped = b + 2.0 * peak.run(b);
                let gurgle = 1.0 + 0.35 * (std::f64::consts::TAU * t.gurgle_hz * i as f64 / rate + phase).sin();
                *o = shaped * gurgle;
            }
            normalize_to(&mut out, rng.random_range(0.05..0.2));
        }
        Segment::Pour => {
            let mut band = [Biquad::bandpass(rng.random_range(350.0..700.0), 1.5, rate), Biquad::lowpass(900.0, 0.707, rate)];
            for (i, o) in out.iter_mut().enumerate() {
                let trickle = 1.0 + 0.8 * (std::f64::consts::TAU * 1.5 * i as f64 / rate).sin().abs();
                *o = chain(&mut band, white(rng)) * trickle;
            }
            normalize_to(&mut out, rng.random_range(0.03..0.1));
        }
        Segment::Hum => {
            let amps = [1.0, rng.random_range(0.2..0.6), rng.random_range(0.1..0.4), rng.random_range(0.0..0.2)];
            let f0 = t.mains_hz * if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            for (i, o) in out.iter_mut().enumerate() {
                let tt = i as f64 / rate;
                *o = amps.iter().enumerate().map(|(h, a)| a * (std::f64::consts::TAU * f0 * (h + 1) as f64 * tt).sin()).sum();
            }
            normalize_to(&mut out, rng.random_range(0.02..0.15));
        }
        Segment::Silence => {}
        Segment::Clicks => {
            let n_clicks = rng.random_range(2..8);
            let len = (0.004 * rate) as usize;
            for _ in 0..n_clicks {
                let at = rng.random_range(0..n.saturating_sub(len).max(1));
                let amp = rng.random_range(0.2..0.8);
                for k in 0..len.min(n - at) {
                    let decay = (-(k as f64) / (0.001 * rate)).exp();
                    out[at + k] += amp * decay * white(rng);
                }
            }
        }
        Segment::Room => {}
    }
    out
}

fn render_recording(cfg: &SynthConfig, participant: usize, take: usize) -> SynthRecording {
    let rate = cfg.sample_rate_hz as f64;
    let timbre = Timbre::for_participant(participant, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((participant * 1000 + take) as u64);

    // Tap runs of 1–3 segments, other segments drawn independently.
    let n_seg = cfg.segments_per_recording;
    let mut kinds = Vec::with_capacity(n_seg);
    while kinds.len() < n_seg {
        let u: f64 = rng.random();
        let mean_run = 2.0;
        if u < cfg.tap_fraction / mean_run {
            let run = rng.random_range(1..=3).min(n_seg - kinds.len());
            kinds.extend(std::iter::repeat_n(Segment::Tap, run));
        } else if u < cfg.tap_fraction / mean_run + cfg.pour_fraction {
            kinds.push(Segment::Pour);
        } else {
            kinds.push(match rng.random_range(0..4) {
                0 => Segment::Hum,
                1 => Segment::Silence,
                2 => Segment::Clicks,
                _ => Segment::Room,
            });
        }
    }

    let seg_n = (cfg.segment_s * rate).round() as usize;
    let mut samples = Vec::with_capacity(seg_n * n_seg);
    for &k in &kinds {
        samples.extend(render_segment(k, seg_n, rate, &timbre, &mut rng));
    }
    // room bed: low-passed noise at a level far below the events, absent
    // during silent segments
    let mut room = [Biquad::lowpass(timbre.room_cutoff_hz, 0.707, rate), Biquad::lowpass(timbre.room_cutoff_hz, 0.707, rate)];
    let bed = rng.random_range(0.003..0.01);
    for (i, s) in samples.iter_mut().enumerate() {
        let r = chain(&mut room, white(&mut rng)) * bed * 8.0;
        if kinds[i / seg_n] != Segment::Silence {
            *s += r;
        } else {
            *s += 1e-5 * white(&mut rng);
        }
        *s = s.clamp(-1.0, 1.0);
    }

    let participant_id = format!("P{:02}", participant + 1);
    let recording_id = format!("{participant_id}_{:02}", take + 1);
    let mut annotations = Vec::new();
    let mut push_runs = |label: &str, pred: &dyn Fn(Segment) -> bool| {
        let mut i = 0;
        while i < n_seg {
            if pred(kinds[i]) {
                let start = i;
                while i < n_seg && pred(kinds[i]) {
                    i += 1;
                }
                annotations.push(AnnotationRecord {
                    participant_id: participant_id.clone(),
                    recording_id: recording_id.clone(),
                    class_label: label.to_string(),
                    start_s: start as f64 * cfg.segment_s,
                    end_s: i as f64 * cfg.segment_s,
                });
            } else {
                i += 1;
            }
        }
    };
    push_runs(TAP_WATER, &|k| k == Segment::Tap);
    push_runs(WATER, &|k| matches!(k, Segment::Tap | Segment::Pour));

    SynthRecording { participant_id, recording_id, audio: AudioBuffer::new(samples, cfg.sample_rate_hz), annotations }
}

/// Renders every recording; identical output for identical configs.
pub fn generate_corpus(cfg: &SynthConfig) -> Vec<SynthRecording> {
    let jobs: Vec<(usize, usize)> =
        (0..cfg.n_participants).flat_map(|p| (0..cfg.recordings_per_participant).map(move |r| (p, r))).collect();
    jobs.par_iter().map(|&(p, r)| render_recording(cfg, p, r)).collect()
}

/// Annotation CSV (with header) for a set of recordings.
pub fn annotations_csv(recordings: &[SynthRecording]) -> String {
    let mut out = crate::annotations::CSV_HEADER.join(",");
    out.push('\n');
    for a in recordings.iter().flat_map(|r| &r.annotations) {
        out.push_str(&format!("{},{},{},{},{}\n", a.participant_id, a.recording_id, a.class_label, a.start_s, a.end_s));
    }
    out
}
