//! Labeled 2 s windows and the two evaluation splits.
//!
//! A window is positive when its overlap with the merged positive intervals
//! covers at least `overlap_threshold` of the nominal window length. The
//! last window of a recording may be partial; its overlap is measured on the
//! true audio span only, and the audio is zero-padded for feature
//! extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{IntervalSet, SNAP_EPS};
use crate::dsp::{AudioBuffer, FeatureExtractor, FeatureVector, LogMelSpectrogram};

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("no samples to split")]
    Empty,
    #[error("class {class} has {count} samples; at least 2 are needed")]
    TooFewInClass { class: &'static str, count: usize },
    #[error("leave-one-participant-out needs at least 2 participants, found {0}")]
    TooFewParticipants(usize),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    Fraction(f64),
    #[error("plan references unknown sample {0}")]
    UnknownSample(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleId {
    pub participant_id: String,
    pub recording_id: String,
    pub window_index: usize,
}

impl std::fmt::Display for SampleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}#{}", self.participant_id, self.recording_id, self.window_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub id: SampleId,
    pub window_start_s: f64,
    pub label: bool,
    pub features: Option<FeatureVector>,
    pub logmel: Option<LogMelSpectrogram>,
}

/// Label of one window before any audio processing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLabel {
    pub window_index: usize,
    pub window_start_s: f64,
    /// Positive time inside the window's true (unpadded) span.
    pub overlap_s: f64,
    pub label: bool,
}

/// `ceil(n_samples / window_samples)`, the number of windows covering a
/// recording.
pub fn window_count(n_samples: usize, window_samples: usize) -> usize {
    n_samples.div_ceil(window_samples)
}

/// Labels consecutive non-overlapping windows of a recording lasting
/// `duration_s`.
pub fn window_labels(duration_s: f64, n_windows: usize, positive: &IntervalSet, window_s: f64, threshold: f64) -> Vec<WindowLabel> {
    (0..n_windows)
        .map(|i| {
            let start = i as f64 * window_s;
            let end = (start + window_s).min(duration_s);
            let overlap_s = positive.overlap_with(start, end);
            WindowLabel {
                window_index: i,
                window_start_s: start,
                overlap_s,
                label: overlap_s >= threshold * window_s - SNAP_EPS,
            }
        })
        .collect()
}

/// What [`window_and_label`] keeps for each window; at least one must be set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowContent {
    pub features: bool,
    pub logmel: bool,
}

impl Default for WindowContent {
    fn default() -> Self {
        Self { features: true, logmel: true }
    }
}

/// Cuts `audio` into windows, labels them against `positive`, and extracts
/// the requested representations. `audio` must already be at the
/// extractor's sample rate.
pub fn window_and_label(
    participant_id: &str,
    recording_id: &str,
    audio: &AudioBuffer,
    positive: &IntervalSet,
    extractor: &FeatureExtractor,
    overlap_threshold: f64,
    content: WindowContent,
) -> Vec<WindowSample> {
    assert!(content.features || content.logmel, "a window sample needs features or a spectrogram");
    let cfg = extractor.config();
    assert_eq!(audio.sample_rate_hz, cfg.sample_rate_hz, "resample before windowing");
    let win = cfg.window_samples();
    let n = window_count(audio.samples.len(), win);
    window_labels(audio.duration_s(), n, positive, cfg.window_s, overlap_threshold)
        .into_iter()
        .map(|wl| {
            let lo = wl.window_index * win;
            let hi = (lo + win).min(audio.samples.len());
            let w = extractor.extract_window(&audio.samples[lo..hi], wl.window_start_s);
            let (features, logmel) = (content.features.then_some(w.features), content.logmel.then_some(w.logmel));
            WindowSample {
                id: SampleId {
                    participant_id: participant_id.to_string(),
                    recording_id: recording_id.to_string(),
                    window_index: wl.window_index,
                },
                window_start_s: wl.window_start_s,
                label: wl.label,
                features,
                logmel,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    #[serde(rename = "random_70_30")]
    Random7030,
    #[serde(rename = "lopo")]
    Lopo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Held-out participant for LOPO, `"task_a"` otherwise.
    pub name: String,
    pub train: Vec<SampleId>,
    pub test: Vec<SampleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub seed: u64,
    /// Task A only.
    pub train_fraction: Option<f64>,
    /// Task A splits windows, so windows of one recording can land on both
    /// sides.
    pub unit: String,
    pub folds: Vec<Fold>,
}

/// Indices into the sample slice a plan was resolved against.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedFold {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Maps every id to its position in `ids`.
    pub fn resolve(&self, ids: &[SampleId]) -> Result<Vec<ResolvedFold>, SplitError> {
        let index: HashMap<&SampleId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let lookup = |list: &[SampleId]| -> Result<Vec<usize>, SplitError> {
            list.iter()
                .map(|id| index.get(id).copied().ok_or_else(|| SplitError::UnknownSample(id.to_string())))
                .collect()
        };
        self.folds
            .iter()
            .map(|f| Ok(ResolvedFold { name: f.name.clone(), train: lookup(&f.train)?, test: lookup(&f.test)? }))
            .collect()
    }
}

fn canonical(samples: &[(SampleId, bool)]) -> Vec<(SampleId, bool)> {
    let mut v = samples.to_vec();
    v.sort();
    v
}

/// Stratified random split of windows. Positive and negative pools are
/// shuffled independently and each split `train_fraction` / rest.
pub fn split_task_a(samples: &[(SampleId, bool)], train_fraction: f64, seed: u64) -> Result<SplitPlan, SplitError> {
    if samples.is_empty() {
        return Err(SplitError::Empty);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::Fraction(train_fraction));
    }
    let sorted = canonical(samples);
    let mut pos: Vec<SampleId> = sorted.iter().filter(|s| s.1).map(|s| s.0.clone()).collect();
    let mut neg: Vec<SampleId> = sorted.iter().filter(|s| !s.1).map(|s| s.0.clone()).collect();
    for (class, pool) in [("positive", &pos), ("negative", &neg)] {
        if pool.len() < 2 {
            return Err(SplitError::TooFewInClass { class, count: pool.len() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for pool in [pos, neg] {
        let k = ((train_fraction * pool.len() as f64).round() as usize).clamp(1, pool.len() - 1);
        train.extend_from_slice(&pool[..k]);
        test.extend_from_slice(&pool[k..]);
    }
    train.sort();
    test.sort();
    Ok(SplitPlan {
        kind: SplitKind::Random7030,
        seed,
        train_fraction: Some(train_fraction),
        unit: "window".into(),
        folds: vec![Fold { name: "task_a".into(), train, test }],
    })
}

/// One fold per participant, testing on that participant's windows.
pub fn split_lopo(samples: &[(SampleId, bool)]) -> Result<SplitPlan, SplitError> {
    if samples.is_empty() {
        return Err(SplitError::Empty);
    }
    let sorted = canonical(samples);
    let mut by_participant: BTreeMap<&str, Vec<SampleId>> = BTreeMap::new();
    for (id, _) in &sorted {
        by_participant.entry(id.participant_id.as_str()).or_default().push(id.clone());
    }
    if by_participant.len() < 2 {
        return Err(SplitError::TooFewParticipants(by_participant.len()));
    }
    let folds = by_participant
        .keys()
        .map(|&p| Fold {
            name: p.to_string(),
            test: by_participant[p].clone(),
            train: sorted.iter().filter(|(id, _)| id.participant_id != p).map(|(id, _)| id.clone()).collect(),
        })
        .collect();
    Ok(SplitPlan { kind: SplitKind::Lopo, seed: 0, train_fraction: None, unit: "participant".into(), folds })
}

/// Checks that every fold is a partition of `ids` into disjoint train and
/// test sets.
pub fn check_plan(plan: &SplitPlan, ids: &[SampleId]) -> Result<(), String> {
    let all: BTreeSet<&SampleId> = ids.iter().collect();
    for f in &plan.folds {
        let train: BTreeSet<&SampleId> = f.train.iter().collect();
        let test: BTreeSet<&SampleId> = f.test.iter().collect();
        if train.len() != f.train.len() || test.len() != f.test.len() {
            return Err(format!("fold {} repeats an id", f.name));
        }
        if !train.is_disjoint(&test) {
            return Err(format!("fold {} leaks samples between train and test", f.name));
        }
        let union: BTreeSet<&SampleId> = train.union(&test).copied().collect();
        if union != all {
            return Err(format!("fold {} does not cover every sample", f.name));
        }
    }
    Ok(())
}
