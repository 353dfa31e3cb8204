use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use tapwater_core::annotations::{class_sets, IntervalSet};
use tapwater_core::dataset::{window_count, window_labels};
use tapwater_core::dsp::{load_wav, resample_to, FeatureExtractor};
use tapwater_core::storage::{FeatureTable, SpectrogramStack};

use crate::config::RunConfig;
use crate::data::{
    discover_audio, load_annotations, AudioSource, ClassCount, FeatureManifest, RecordingEntry, Skipped, MANIFEST_FILE,
    MANIFEST_VERSION,
};
use crate::error::{write, CliError, Result};

struct Featurized {
    entry: RecordingEntry,
    table: FeatureTable,
    stack: SpectrogramStack,
}

fn featurize_one(
    src: &AudioSource,
    extractor: &FeatureExtractor,
    sets: &BTreeMap<String, BTreeMap<(String, String), IntervalSet>>,
    threshold: f64,
) -> std::result::Result<Featurized, String> {
    let bytes = std::fs::read(&src.path).map_err(|e| format!("{}: {e}", src.path.display()))?;
    let mut audio = load_wav(&bytes).map_err(|e| format!("{}: {e}", src.path.display()))?;
    let cfg = extractor.config();
    if audio.sample_rate_hz != cfg.sample_rate_hz {
        audio = resample_to(&audio, cfg.sample_rate_hz);
    }
    let win = cfg.window_samples();
    let n = window_count(audio.samples.len(), win);

    let layout = cfg.layout;
    let mut table = FeatureTable::new(layout, layout.len(cfg));
    let mut stack = SpectrogramStack::new(cfg.n_mels, cfg.frames_per_window());
    for i in 0..n {
        let lo = i * win;
        let hi = (lo + win).min(audio.samples.len());
        let w = extractor.extract_window(&audio.samples[lo..hi], i as f64 * cfg.window_s);
        table.push(&w.features).map_err(|e| e.to_string())?;
        stack.push(&w.logmel).map_err(|e| e.to_string())?;
    }

    let key = (src.participant_id.clone(), src.recording_id.clone());
    let empty = IntervalSet::empty();
    let labels = sets
        .iter()
        .map(|(class, by_rec)| {
            let set = by_rec.get(&key).unwrap_or(&empty);
            let bits = window_labels(audio.duration_s(), n, set, cfg.window_s, threshold)
                .iter()
                .map(|w| if w.label { '1' } else { '0' })
                .collect();
            (class.clone(), bits)
        })
        .collect();
    let stem = format!("{}/{}", src.participant_id, src.recording_id);
    Ok(Featurized {
        entry: RecordingEntry {
            participant_id: src.participant_id.clone(),
            recording_id: src.recording_id.clone(),
            duration_s: audio.duration_s(),
            n_windows: n,
            features: format!("features/{stem}.tapf"),
            spectrograms: format!("spectrograms/{stem}.taps"),
            labels,
        },
        table,
        stack,
    })
}

/// Windows, labels and featurizes every discovered recording. Writes one
/// feature file and one spectrogram file per recording plus
/// `<out>/manifest.json`. Unreadable recordings are skipped with a warning;
/// the command fails only when none succeed.
pub fn featurize(cfg: &RunConfig, write_csv: bool) -> Result<FeatureManifest> {
    let records = load_annotations(cfg)?;
    let sources = discover_audio(cfg, &records)?;
    if sources.is_empty() {
        return Err(CliError::missing(&cfg.paths.audio_root, "no recordings found"));
    }
    let extractor = FeatureExtractor::new(cfg.dsp.clone()).map_err(|e| CliError::Config(e.to_string()))?;

    let mut classes: BTreeSet<String> = records.iter().map(|r| r.class_label.clone()).collect();
    classes.insert(cfg.target_class.clone());
    let sets: BTreeMap<String, _> = classes.iter().map(|c| (c.clone(), class_sets(&records, c))).collect();

    let results: Vec<_> =
        sources.par_iter().map(|src| featurize_one(src, &extractor, &sets, cfg.overlap_threshold)).collect();

    let out = &cfg.paths.output_dir;
    let mut recordings = Vec::new();
    let mut skipped = Vec::new();
    for (src, res) in sources.iter().zip(results) {
        match res {
            Ok(f) => {
                write(&out.join(&f.entry.features), f.table.encode())?;
                write(&out.join(&f.entry.spectrograms), f.stack.encode())?;
                if write_csv {
                    let csv = f.entry.features.replace(".tapf", ".csv");
                    write(&out.join(csv), f.table.to_csv(&cfg.dsp))?;
                }
                recordings.push(f.entry);
            }
            Err(reason) => {
                eprintln!("warning: skipping {}/{}: {reason}", src.participant_id, src.recording_id);
                skipped.push(Skipped {
                    participant_id: src.participant_id.clone(),
                    recording_id: src.recording_id.clone(),
                    reason,
                });
            }
        }
    }
    if recordings.is_empty() {
        return Err(CliError::missing(&cfg.paths.audio_root, format!("none of {} recordings could be read", sources.len())));
    }

    let totals = classes
        .iter()
        .map(|c| {
            let windows: usize = recordings.iter().map(|r| r.n_windows).sum();
            let positives = recordings.iter().map(|r| r.labels[c].bytes().filter(|&b| b == b'1').count()).sum();
            let prevalence = if windows == 0 { 0.0 } else { positives as f64 / windows as f64 };
            (c.clone(), ClassCount { positives, windows, prevalence })
        })
        .collect();
    let manifest = FeatureManifest {
        format_version: MANIFEST_VERSION,
        dsp: cfg.dsp.clone(),
        overlap_threshold: cfg.overlap_threshold,
        classes: classes.into_iter().collect(),
        recordings,
        totals,
        skipped,
    };
    write(&out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest).expect("serializes"))?;
    Ok(manifest)
}
