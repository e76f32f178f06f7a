//! Orchestration of the synthetic-data pipeline: experiment configs,
//! the bundled toy corpus, artifact layout and the pipeline commands.

pub mod artifacts;
mod config;
mod error;
pub mod image;
pub mod pipeline;
pub mod toy;

pub use artifacts::{AsrData, Layout, RunManifest, SynthSet, System};
pub use config::{
    AlignSettings, AsrSettings, AsrTrainSettings, BootstrapSettings, DataConfig, DecodeSettings, ExperimentConfig,
    Features, MosSettings, Paths, TrunkSettings, TtsTrainSettings, VocoderSettings,
};
pub use error::PipelineError;
