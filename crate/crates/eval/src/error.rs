use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("utterance `{utt}` has speaker `{speaker}` missing from the speaker table")]
    UnknownSpeaker { utt: String, speaker: String },
    #[error("speaker `{speaker}` has {count} utterances, needs more than {k} to hold out {k}")]
    TooFewUtterances { speaker: String, count: usize, k: usize },
    #[error("condition c needs {expected} new texts, got {got}")]
    TextCount { expected: usize, got: usize },
    #[error("references contain no words")]
    EmptyReferences,
    #[error("no scores to summarize")]
    EmptyScores,
    #[error("confidence level {0} outside (0, 1)")]
    Level(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Mos(#[from] crate::mos::MosError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
