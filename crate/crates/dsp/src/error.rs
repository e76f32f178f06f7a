use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error("signal has {len} samples, shorter than one {window}-sample window")]
    SignalTooShort { len: usize, window: usize },
    #[error("fmax {fmax} Hz exceeds the Nyquist frequency {nyquist} Hz")]
    FmaxAboveNyquist { fmax: f64, nyquist: f64 },
    #[error("empty spectrogram")]
    EmptySpectrogram,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("learned mel inversion requested but no checkpoint is loaded")]
    MissingCheckpoint,
    #[error("invalid Griffin-Lim parameters: {0}")]
    GriffinLim(String),
    #[error("malformed spectrogram file: {0}")]
    Format(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] synthasr_nn::NnError),
}
