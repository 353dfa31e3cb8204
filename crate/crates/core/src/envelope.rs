//! Self-describing model file shared by both classifiers.
//!
//! Byte layout, all integers little-endian:
//!
//! | field            | encoding                                  |
//! |------------------|-------------------------------------------|
//! | magic            | `TAPM`                                    |
//! | format version   | u16 (currently 1)                         |
//! | section tag      | 4 ASCII bytes, `FRST` or `CNN1`           |
//! | DSP config       | u32 length + JSON                         |
//! | layout tag       | u8 length + ASCII (`v1`, `full-v1`, `logmel`) |
//! | metadata         | u32 length + JSON                         |
//! | payload          | u32 length + section bytes                |
//! | checksum         | u32 CRC-32 (IEEE) of every preceding byte |
//!
//! The checksum is verified before any other field is interpreted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::dsp::{DspConfig, FeatureExtractor, WindowFeatures};
use crate::forest::{ForestError, ForestModel};
use crate::neural::{predict_cnn, CnnModel, NeuralError, TrainConfig};
use crate::Prediction;

pub const ENVELOPE_MAGIC: &[u8; 4] = b"TAPM";
pub const ENVELOPE_VERSION: u16 = 1;
pub const FOREST_SECTION: &[u8; 4] = b"FRST";
pub const CNN_SECTION: &[u8; 4] = b"CNN1";
pub const CNN_LAYOUT: &str = "logmel";

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("not a model file: {0}")]
    Codec(#[from] CodecError),
    #[error("unsupported model format version {0}")]
    Version(u16),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unknown section {0:?}")]
    Section(String),
    #[error("bad {field} JSON: {message}")]
    Json { field: &'static str, message: String },
    #[error("model was trained with a different DSP configuration: {0}")]
    DspMismatch(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Training context carried alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeMeta {
    pub target_class: String,
    pub seed: u64,
    pub overlap_threshold: f64,
    /// Optimizer settings, so evaluation can retrain a CNN per fold.
    pub cnn_train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Forest(ForestModel),
    Cnn(CnnModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Forest(_) => "forest",
            Model::Cnn(_) => "cnn",
        }
    }

    pub fn predict_window(&self, w: &WindowFeatures) -> Result<Prediction, EnvelopeError> {
        Ok(match self {
            Model::Forest(m) => m.predict(&w.features)?,
            Model::Cnn(m) => {
                let db: Vec<f32> = w.logmel.values.iter().map(|&v| v as f32).collect();
                predict_cnn(m, &db)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnvelope {
    pub dsp: DspConfig,
    pub meta: EnvelopeMeta,
    pub model: Model,
}

impl ModelEnvelope {
    pub fn layout_tag(&self) -> &'static str {
        match &self.model {
            Model::Forest(m) => m.layout.tag(),
            Model::Cnn(_) => CNN_LAYOUT,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let (section, payload) = match &self.model {
            Model::Forest(m) => (FOREST_SECTION, m.to_payload()),
            Model::Cnn(m) => (CNN_SECTION, m.to_payload()),
        };
        let mut w = ByteWriter::new();
        w.bytes(ENVELOPE_MAGIC);
        w.u16(ENVELOPE_VERSION);
        w.bytes(section);
        w.blob(serde_json::to_string(&self.dsp).expect("dsp config serializes").as_bytes());
        w.short_str(self.layout_tag());
        w.blob(serde_json::to_string(&self.meta).expect("metadata serializes").as_bytes());
        w.blob(&payload);
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(ENVELOPE_MAGIC)?;
        if bytes.len() < 4 + 2 + 4 + 4 {
            return Err(CodecError::Truncated(bytes.len()).into());
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("four bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(EnvelopeError::Checksum { stored, computed });
        }

        let mut r = ByteReader::new(body);
        r.expect_magic(ENVELOPE_MAGIC)?;
        let version = r.u16()?;
        if version != ENVELOPE_VERSION {
            return Err(EnvelopeError::Version(version));
        }
        let section: [u8; 4] = r.take(4)?.try_into().expect("four bytes");
        let dsp: DspConfig = serde_json::from_slice(r.blob()?)
            .map_err(|e| EnvelopeError::Json { field: "dsp config", message: e.to_string() })?;
        let layout = r.short_str()?;
        let meta: EnvelopeMeta = serde_json::from_slice(r.blob()?)
            .map_err(|e| EnvelopeError::Json { field: "metadata", message: e.to_string() })?;
        let payload = r.blob()?;
        r.finish()?;

        let model = match &section {
            FOREST_SECTION => Model::Forest(ForestModel::from_payload(payload)?),
            CNN_SECTION => Model::Cnn(CnnModel::from_payload(payload)?),
            other => return Err(EnvelopeError::Section(String::from_utf8_lossy(other).into_owned())),
        };
        let env = Self { dsp, meta, model };
        if env.layout_tag() != layout {
            return Err(CodecError::Invalid(format!("layout tag {layout:?} does not match the payload")).into());
        }
        Ok(env)
    }

    /// Fails unless `dsp` matches the configuration the model was trained
    /// with.
    pub fn check_dsp(&self, dsp: &DspConfig) -> Result<(), EnvelopeError> {
        if &self.dsp == dsp {
            return Ok(());
        }
        let ours = serde_json::to_value(&self.dsp).expect("serializes");
        let theirs = serde_json::to_value(dsp).expect("serializes");
        let fields: Vec<String> = ours
            .as_object()
            .expect("struct")
            .iter()
            .filter(|(k, v)| theirs.get(k.as_str()) != Some(v))
            .map(|(k, v)| format!("{k} (model {v}, stream {})", theirs[k.as_str()]))
            .collect();
        Err(EnvelopeError::DspMismatch(fields.join(", ")))
    }

    /// An extractor for the model's own DSP configuration.
    pub fn extractor(&self) -> Result<FeatureExtractor, EnvelopeError> {
        FeatureExtractor::new(self.dsp.clone()).map_err(|e| EnvelopeError::DspMismatch(e.to_string()))
    }
}
