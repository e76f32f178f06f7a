use thiserror::Error;

#[derive(Debug, Error)]
pub enum AsrError {
    #[error("{labels} labels need at least {required} frames, got {frames}")]
    LabelTooLong {
        labels: usize,
        required: usize,
        frames: usize,
    },
    #[error("label id {id} outside vocabulary of {size}")]
    UnknownLabel { id: usize, size: usize },
    #[error("unknown phoneme symbol `{0}`")]
    UnknownPhoneme(String),
    #[error("words missing from the lexicon: {}", .0.join(", "))]
    UnknownWords(Vec<String>),
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("beam width must be at least 1")]
    BeamWidth,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("language model: {0}")]
    Lm(String),
    #[error(transparent)]
    Nn(#[from] synthasr_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
