use std::path::PathBuf;

use synthasr_asr::AsrError;
use synthasr_dsp::DspError;
use synthasr_eval::EvalError;
use synthasr_nn::NnError;
use synthasr_tts::TtsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {}: run `synthasr {producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::MissingArtifact { .. } => 3,
            PipelineError::Numerical(_) => 4,
            PipelineError::Failed(_) | PipelineError::Io(_) => 1,
        }
    }
}

impl From<NnError> for PipelineError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Config(m) => PipelineError::Config(m),
            NnError::NonFiniteGradient(_) => PipelineError::Numerical(e.to_string()),
            NnError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<TtsError> for PipelineError {
    fn from(e: TtsError) -> Self {
        match e {
            TtsError::Config(m) => PipelineError::Config(m),
            TtsError::NonFinite(_) => PipelineError::Numerical(e.to_string()),
            TtsError::Nn(e) => e.into(),
            TtsError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<AsrError> for PipelineError {
    fn from(e: AsrError) -> Self {
        match e {
            AsrError::Config(m) => PipelineError::Config(m),
            AsrError::UnknownWords(_) | AsrError::Lexicon { .. } | AsrError::UnknownPhoneme(_) => {
                PipelineError::Config(e.to_string())
            }
            AsrError::NonFinite(_) => PipelineError::Numerical(e.to_string()),
            AsrError::Nn(e) => e.into(),
            AsrError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<DspError> for PipelineError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::Config(m) => PipelineError::Config(m),
            DspError::FmaxAboveNyquist { .. } => PipelineError::Config(e.to_string()),
            DspError::NonFinite(_) => PipelineError::Numerical(e.to_string()),
            DspError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Manifest { .. }
            | EvalError::DuplicateId(_)
            | EvalError::UnknownSpeaker { .. }
            | EvalError::TooFewUtterances { .. }
            | EvalError::TextCount { .. }
            | EvalError::Level(_) => PipelineError::Config(e.to_string()),
            EvalError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Failed(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Failed(format!("json: {e}"))
    }
}
