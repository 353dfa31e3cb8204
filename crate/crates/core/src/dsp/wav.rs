use std::io::Cursor;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, DspError};

/// Decodes a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
/// Stereo input is averaged to mono.
pub fn load_wav(bytes: &[u8]) -> Result<AudioBuffer, DspError> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if !(1..=2).contains(&spec.channels) {
        return Err(DspError::Unsupported(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(DspError::Unsupported(format!("{fmt:?} with {bits} bits per sample")));
        }
    };
    if let Some(bad) = interleaved.iter().find(|v| !v.is_finite()) {
        return Err(DspError::Decode(format!("non-finite sample {bad}")));
    }

    let channels = spec.channels as usize;
    if !interleaved.len().is_multiple_of(channels) {
        return Err(DspError::Decode("truncated sample frame".into()));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(channels).map(|c| c.iter().sum::<f64>() / channels as f64).collect()
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

fn map_hound(e: hound::Error) -> DspError {
    match e {
        hound::Error::Unsupported => DspError::Unsupported("codec not supported".into()),
        hound::Error::IoError(io) => DspError::Decode(format!("truncated or unreadable data: {io}")),
        other => DspError::Decode(other.to_string()),
    }
}

fn encode<F: FnMut(&mut WavWriter<&mut Cursor<Vec<u8>>>) -> hound::Result<()>>(
    spec: WavSpec,
    mut write: F,
) -> Vec<u8> {
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut cursor, spec).expect("in-memory wav writer");
        write(&mut writer).expect("in-memory wav write");
        writer.finalize().expect("in-memory wav finalize");
    }
    cursor.into_inner()
}

/// Mono 16-bit PCM encoding; samples are clamped to [-1, 1].
pub fn encode_wav_i16(buffer: &AudioBuffer) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    encode(spec, |w| {
        for &s in &buffer.samples {
            w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
        }
        Ok(())
    })
}

/// Mono 32-bit float encoding.
pub fn encode_wav_f32(buffer: &AudioBuffer) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    encode(spec, |w| {
        for &s in &buffer.samples {
            w.write_sample(s as f32)?;
        }
        Ok(())
    })
}
