pub mod evaluate;
pub mod export;
pub mod featurize;
pub mod stats;
pub mod stream;
pub mod synth;
pub mod train;
pub mod validate;

pub use evaluate::{evaluate, EvaluateOutcome, Task};
pub use export::{export_spectrogram, SpectrogramSource};
pub use featurize::featurize;
pub use stats::{stats, StatsReport};
pub use stream::{stream, StreamEvent, StreamInput, StreamSummary};
pub use synth::write_synth_corpus;
pub use train::{load_envelope, train, ModelKind, TrainLog, TrainOutcome};
pub use validate::{validate, ValidationReport};
