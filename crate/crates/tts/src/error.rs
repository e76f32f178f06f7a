use thiserror::Error;

#[derive(Debug, Error)]
pub enum TtsError {
    #[error("empty phoneme sequence")]
    EmptySequence,
    #[error("phoneme id {id} outside vocabulary of {size}")]
    UnknownPhoneme { id: usize, size: usize },
    #[error("speaker id {id} outside table of {size}")]
    UnknownSpeaker { id: usize, size: usize },
    #[error("durations sum to zero")]
    ZeroDuration,
    #[error("{phonemes} phonemes cannot be aligned to {frames} frames")]
    TooFewFrames { phonemes: usize, frames: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("duration archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Nn(#[from] synthasr_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
