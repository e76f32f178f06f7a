//! Duration-based multi-speaker TTS: a shared encoder trunk with duration
//! predictor, and five interchangeable spectrogram decoders.

mod archive;
mod config;
pub mod decoders;
mod error;
pub mod mas;
mod model;
mod norm;
mod train;
mod trunk;
pub mod upsample;

pub use archive::{vocab_hash, DurationArchive};
pub use config::{
    DecoderConfig, NoiseSchedule, PostnetConfig, SamplingConfig, TrunkConfig, TtsConfig, Variant,
};
pub use error::TtsError;
pub use model::{LossTerms, Synthesis, TtsExample, TtsModel};
pub use norm::MelNorm;
pub use train::{extract_durations, train_tts, TrainConfig, TrainReport};
pub use trunk::{broadcast_rows, duration_loss, PhonemeSequence, Trunk};
