//! Binary feature (`TAPF`) and spectrogram (`TAPS`) files.
//!
//! TAPF layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `TAPF` |
//! | 2 | version (1) |
//! | 1 + n | layout tag, length-prefixed UTF-8 (`v1`, `full-v1`) |
//! | 2 | vector length |
//! | 8 | vector count |
//! | 4 · len · count | f32 values, vector-major |
//!
//! TAPS replaces the layout tag and vector length with `n_mels` (u16) and
//! `n_frames` (u16); each record is one `n_mels × n_frames` log-mel matrix,
//! mel-major, as f32.

use ndarray::Array2;
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::dsp::{DspConfig, FeatureLayout, FeatureVector, LogMelSpectrogram};

pub const FEATURE_MAGIC: &[u8; 4] = b"TAPF";
pub const SPECTROGRAM_MAGIC: &[u8; 4] = b"TAPS";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum StorageError {
    #[error("malformed file: {0}")]
    Codec(#[from] CodecError),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("unknown feature layout tag {0:?}")]
    Layout(String),
    #[error("inconsistent shapes: {0}")]
    Shape(String),
}

/// Feature vectors of one recording, in window order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub layout: FeatureLayout,
    pub dim: usize,
    /// `count × dim`, vector-major.
    pub values: Vec<f32>,
}

impl FeatureTable {
    pub fn new(layout: FeatureLayout, dim: usize) -> Self {
        Self { layout, dim, values: Vec::new() }
    }

    pub fn from_vectors(layout: FeatureLayout, dim: usize, vectors: &[FeatureVector]) -> Result<Self, StorageError> {
        let mut table = Self::new(layout, dim);
        for v in vectors {
            table.push(v)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, v: &FeatureVector) -> Result<(), StorageError> {
        if v.layout != self.layout || v.len() != self.dim {
            return Err(StorageError::Shape(format!(
                "vector {}×{} does not fit table {}×{}",
                v.layout.tag(),
                v.len(),
                self.layout.tag(),
                self.dim
            )));
        }
        self.values.extend_from_slice(&v.values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, i: usize) -> FeatureVector {
        FeatureVector { values: self.row(i).to_vec(), layout: self.layout }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(FEATURE_MAGIC);
        w.u16(FORMAT_VERSION);
        w.short_str(self.layout.tag());
        w.u16(u16::try_from(self.dim).expect("vector length fits u16"));
        w.u64(self.len() as u64);
        for v in &self.values {
            w.f32(*v);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, StorageError> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(FEATURE_MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(StorageError::Version(version));
        }
        let tag = r.short_str()?;
        let layout = FeatureLayout::from_tag(&tag).ok_or(StorageError::Layout(tag))?;
        let dim = r.u16()? as usize;
        let count = r.u64()? as usize;
        let n = count
            .checked_mul(dim)
            .filter(|n| n.saturating_mul(4) <= r.remaining())
            .ok_or(CodecError::Truncated(bytes.len()))?;
        let values = r.f32_vec(n)?;
        r.finish()?;
        Ok(Self { layout, dim, values })
    }

    /// CSV with header `window_index,window_start_s,<feature columns>`.
    pub fn to_csv(&self, config: &DspConfig) -> String {
        let names = self.layout.column_names(config);
        let mut out = String::from("window_index,window_start_s");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{i},{}", i as f64 * config.window_s));
            for v in self.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Log-mel spectrograms of one recording, in window order, stored as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramStack {
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<f32>,
}

impl SpectrogramStack {
    pub fn new(n_mels: usize, n_frames: usize) -> Self {
        Self { n_mels, n_frames, values: Vec::new() }
    }

    pub fn push(&mut self, spec: &LogMelSpectrogram) -> Result<(), StorageError> {
        if spec.values.dim() != (self.n_mels, self.n_frames) {
            return Err(StorageError::Shape(format!(
                "spectrogram {:?} does not fit stack {}×{}",
                spec.values.dim(),
                self.n_mels,
                self.n_frames
            )));
        }
        self.values.extend(spec.values.iter().map(|&v| v as f32));
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.n_mels * self.n_frames
    }

    pub fn len(&self) -> usize {
        match self.cell_count() {
            0 => 0,
            c => self.values.len() / c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn item(&self, i: usize) -> &[f32] {
        let c = self.cell_count();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn spectrogram(&self, i: usize, frame_hop_s: f64, window_origin_s: f64) -> LogMelSpectrogram {
        let values = Array2::from_shape_vec((self.n_mels, self.n_frames), self.item(i).iter().map(|&v| v as f64).collect())
            .expect("stack item has matrix shape");
        LogMelSpectrogram { values, frame_hop_s, window_origin_s }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(SPECTROGRAM_MAGIC);
        w.u16(FORMAT_VERSION);
        w.u16(u16::try_from(self.n_mels).expect("n_mels fits u16"));
        w.u16(u16::try_from(self.n_frames).expect("n_frames fits u16"));
        w.u64(self.len() as u64);
        for v in &self.values {
            w.f32(*v);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, StorageError> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(SPECTROGRAM_MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(StorageError::Version(version));
        }
        let n_mels = r.u16()? as usize;
        let n_frames = r.u16()? as usize;
        let count = r.u64()? as usize;
        let n = count
            .checked_mul(n_mels * n_frames)
            .filter(|n| n.saturating_mul(4) <= r.remaining())
            .ok_or(CodecError::Truncated(bytes.len()))?;
        let values = r.f32_vec(n)?;
        r.finish()?;
        Ok(Self { n_mels, n_frames, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FeatureTable {
        let vs: Vec<FeatureVector> = (0..3)
            .map(|i| FeatureVector { values: (0..41).map(|k| (i * 41 + k) as f32 * 0.5).collect(), layout: FeatureLayout::V1 })
            .collect();
        FeatureTable::from_vectors(FeatureLayout::V1, 41, &vs).unwrap()
    }

    #[test]
    fn feature_file_round_trip() {
        let t = table();
        let bytes = t.encode();
        assert_eq!(&bytes[..4], b"TAPF");
        assert_eq!(bytes.len(), 4 + 2 + 3 + 2 + 8 + 3 * 41 * 4);
        let back = FeatureTable::decode(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.vector(2).values[0], 41.0);
    }

    #[test]
    fn feature_file_rejects_damage() {
        let bytes = table().encode();
        assert!(FeatureTable::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(FeatureTable::decode(&extra).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert_eq!(FeatureTable::decode(&bad_version), Err(StorageError::Version(9)));
    }

    #[test]
    fn wrong_layout_rejected() {
        let mut t = FeatureTable::new(FeatureLayout::V1, 41);
        let v = FeatureVector { values: vec![0.0; 180], layout: FeatureLayout::Full };
        assert!(t.push(&v).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let csv = table().to_csv(&DspConfig::default());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("window_index,window_start_s,mfcc0_mean,"));
        assert_eq!(lines[0].split(',').count(), 43);
        assert!(lines[2].starts_with("1,2,20.5,"));
    }

    #[test]
    fn spectrogram_round_trip() {
        let mut s = SpectrogramStack::new(2, 3);
        let spec = LogMelSpectrogram {
            values: ndarray::array![[0.0, -1.0, -2.0], [-3.0, -4.0, -5.5]],
            frame_hop_s: 0.01,
            window_origin_s: 0.0,
        };
        s.push(&spec).unwrap();
        s.push(&spec).unwrap();
        let back = SpectrogramStack::decode(&s.encode()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.spectrogram(1, 0.01, 2.0).values, spec.values);
    }
}
