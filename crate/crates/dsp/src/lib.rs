//! Waveform and spectrogram conversions: STFT, log-Mel features, mel to
//! linear inversion and Griffin-Lim phase reconstruction.

mod audio;
mod config;
mod error;
mod griffin_lim;
mod inverse;
pub mod learned;
mod mel;
pub mod specfile;
pub mod stft;

pub use audio::{read_wav, write_wav, AudioSignal};
pub use config::{FeatureConfig, Padding};
pub use error::DspError;
pub use griffin_lim::{griffin_lim, griffin_lim_traced, GriffinLimConfig, GriffinLimOutput};
pub use inverse::{mel_to_linear, InversionMode, MelInverter};
pub use learned::{LearnedInverter, LearnedInverterConfig};
pub use mel::{
    hz_to_mel, log_mel, mel_to_hz, LinearSpectrogram, MelExtractor, MelFilterbank, MelSpectrogram,
};
pub use stft::{stft, ComplexSpectrogram, Stft};
