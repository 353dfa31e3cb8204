use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tapwater_core::dsp::{load_wav, resample_to, AudioBuffer};
use tapwater_core::smoothing::MajoritySmoother;

use super::train::load_envelope;
use crate::config::RunConfig;
use crate::error::{read, CliError, Result};

/// One line of the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub score: f64,
    pub raw_label: bool,
    pub smoothed_label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub windows: usize,
    pub audio_s: f64,
    pub processing_s: f64,
    /// Processing time over audio time; below 1 keeps up with real time.
    pub real_time_factor: f64,
    pub slowest_window_s: f64,
    pub smoothing_k: usize,
}

pub enum StreamInput<'a> {
    Wav(&'a Path),
    /// Mono signed 16-bit little-endian PCM at the given rate.
    Pcm { reader: Box<dyn Read + 'a>, sample_rate_hz: u32 },
}

/// Reads up to `n` PCM samples; `None` at end of input.
fn read_pcm_chunk(reader: &mut dyn Read, n: usize) -> std::io::Result<Option<Vec<f64>>> {
    let mut buf = vec![0u8; n * 2];
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    if filled < 2 {
        return Ok(None);
    }
    Ok(Some(buf[..filled - filled % 2].chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0).collect()))
}

/// Scores consecutive windows, smooths the decisions by majority vote and
/// writes one JSON event per window to `sink`. Smoothed events lag the
/// audio by `k / 2` windows.
pub fn stream(cfg: &RunConfig, model_path: &Path, input: StreamInput, k: usize, sink: &mut dyn Write) -> Result<StreamSummary> {
    let envelope = load_envelope(model_path)?;
    envelope.check_dsp(&cfg.dsp).map_err(|e| CliError::ModelMismatch(e.to_string()))?;
    let extractor = envelope.extractor().map_err(|e| CliError::ModelMismatch(e.to_string()))?;
    let mut smoother = MajoritySmoother::new(k).map_err(|e| CliError::Usage(e.to_string()))?;
    let dsp = &envelope.dsp;
    let win = dsp.window_samples();
    let io_err = |e: std::io::Error| CliError::Io { path: "<stream>".into(), source: e };

    let start = Instant::now();
    let mut pending: Vec<(f64, f64, f64, bool)> = Vec::new();
    let mut summary = StreamSummary {
        windows: 0,
        audio_s: 0.0,
        processing_s: 0.0,
        real_time_factor: 0.0,
        slowest_window_s: 0.0,
        smoothing_k: k,
    };
    let emit = |decided: Vec<(usize, bool)>, pending: &[(f64, f64, f64, bool)], sink: &mut dyn Write| -> Result<()> {
        for (i, smoothed_label) in decided {
            let (t_start, t_end, score, raw_label) = pending[i];
            let ev = StreamEvent { t_start, t_end, score, raw_label, smoothed_label };
            writeln!(sink, "{}", serde_json::to_string(&ev).expect("serializes")).map_err(io_err)?;
        }
        Ok(())
    };

    let mut process = |chunk: &[f64], pending: &mut Vec<(f64, f64, f64, bool)>, summary: &mut StreamSummary| -> Result<Vec<(usize, bool)>> {
        let t0 = Instant::now();
        let t_start = summary.audio_s;
        let w = extractor.extract_window(chunk, t_start);
        let p = envelope.model.predict_window(&w).map_err(|e| CliError::ModelMismatch(e.to_string()))?;
        summary.audio_s += chunk.len() as f64 / dsp.sample_rate_hz as f64;
        summary.windows += 1;
        pending.push((t_start, summary.audio_s, p.score, p.label));
        let decided = smoother.push(p.label);
        summary.slowest_window_s = summary.slowest_window_s.max(t0.elapsed().as_secs_f64());
        Ok(decided)
    };

    match input {
        StreamInput::Wav(path) => {
            let bytes = read(path)?;
            let mut audio: AudioBuffer = load_wav(&bytes).map_err(|e| CliError::schema(path, e))?;
            if audio.sample_rate_hz != dsp.sample_rate_hz {
                audio = resample_to(&audio, dsp.sample_rate_hz);
            }
            for chunk in audio.samples.chunks(win) {
                let decided = process(chunk, &mut pending, &mut summary)?;
                emit(decided, &pending, sink)?;
            }
        }
        StreamInput::Pcm { mut reader, sample_rate_hz } => {
            let in_win = (dsp.window_s * sample_rate_hz as f64).round() as usize;
            while let Some(raw) = read_pcm_chunk(&mut reader, in_win).map_err(io_err)? {
                let mut chunk = AudioBuffer::new(raw, sample_rate_hz);
                if sample_rate_hz != dsp.sample_rate_hz {
                    chunk = resample_to(&chunk, dsp.sample_rate_hz);
                }
                let decided = process(&chunk.samples, &mut pending, &mut summary)?;
                emit(decided, &pending, sink)?;
                sink.flush().map_err(io_err)?;
            }
        }
    }
    emit(smoother.finish(), &pending, sink)?;
    sink.flush().map_err(io_err)?;

    summary.processing_s = start.elapsed().as_secs_f64();
    summary.real_time_factor = if summary.audio_s > 0.0 { summary.processing_s / summary.audio_s } else { 0.0 };
    Ok(summary)
}
