//! Experiment configuration: one TOML file per experiment, optionally
//! layered on a parent file through `extends`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthasr_asr::{AsrConfig, AsrTrainConfig, BeamConfig, Scoring, SpecAugmentConfig, Vocab};
use synthasr_dsp::FeatureConfig;
use synthasr_eval::ConditionKind;
use synthasr_nn::checkpoint::config_hash;
use synthasr_nn::{LrSchedule, OptimizerConfig};
use synthasr_tts::{DecoderConfig, SamplingConfig, TrainConfig, TrunkConfig, TtsConfig, Variant};

use crate::PipelineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Corpus manifest; audio paths inside it are relative to its directory.
    pub manifest: PathBuf,
    pub lexicon: PathBuf,
    /// Sentence source for the new-text condition, one per line.
    #[serde(default)]
    pub new_texts: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Features {
    pub tts: FeatureConfig,
    pub asr: FeatureConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Utterances per speaker held out of training for evaluation.
    pub heldout_per_speaker: usize,
    /// Name of the held-out test set in reports.
    pub test_set: String,
}

/// Trunk hyperparameters; the vocabulary and speaker table come from the
/// corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkSettings {
    pub dim: usize,
    pub speaker_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub ffn_kernel: usize,
    pub prenet_layers: usize,
    pub prenet_kernel: usize,
    pub dropout: f64,
    pub duration_channels: usize,
    pub duration_kernel: usize,
    pub duration_bias: f64,
}

impl TrunkSettings {
    pub fn to_config(&self, vocab_size: usize, num_speakers: usize) -> TrunkConfig {
        TrunkConfig {
            vocab_size,
            num_speakers,
            dim: self.dim,
            speaker_dim: self.speaker_dim,
            heads: self.heads,
            layers: self.layers,
            ffn_dim: self.ffn_dim,
            ffn_kernel: self.ffn_kernel,
            prenet_layers: self.prenet_layers,
            prenet_kernel: self.prenet_kernel,
            dropout: self.dropout,
            duration_channels: self.duration_channels,
            duration_kernel: self.duration_kernel,
            duration_bias: self.duration_bias,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignSettings {
    /// Epochs trained on uniform segmentations before alignment search
    /// takes over.
    #[serde(default)]
    pub flat_start_epochs: f64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerConfig,
    pub clip_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtsTrainSettings {
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Per-variant schedule replacing `schedule`, keyed by variant name.
    #[serde(default)]
    pub schedule_overrides: BTreeMap<String, LrSchedule>,
    pub optimizer: OptimizerConfig,
    pub clip_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocoderSettings {
    pub iterations: usize,
    pub momentum: f64,
    pub nnls_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsrSettings {
    pub model_dim: usize,
    pub num_blocks: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub conv_kernel: usize,
    pub dropout: f64,
    pub frontend_channels: usize,
    pub subsampling_factor: usize,
    pub specaugment: SpecAugmentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsrTrainSettings {
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerConfig,
    pub clip_norm: Option<f64>,
    pub augment: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSettings {
    pub beam: usize,
    pub lm_weight: f64,
    pub lm_order: usize,
    /// Add-k smoothing constant of the n-gram model.
    pub lm_smoothing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosSettings {
    /// Scorer program and leading arguments; the audio path is appended.
    #[serde(default)]
    pub command: Option<Vec<String>>,
    /// HTTP endpoint receiving the audio path as the request body.
    #[serde(default)]
    pub url: Option<String>,
    pub timeout_secs: f64,
    pub retries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    pub level: f64,
    pub resamples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub variant: Variant,
    pub condition: ConditionKind,
    pub workers: usize,
    pub paths: Paths,
    pub features: Features,
    pub data: DataConfig,
    pub trunk: TrunkSettings,
    /// Decoder hyperparameters keyed by variant name.
    pub decoders: BTreeMap<String, DecoderConfig>,
    pub align: AlignSettings,
    pub tts_train: TtsTrainSettings,
    pub sampling: SamplingConfig,
    pub vocoder: VocoderSettings,
    pub asr: AsrSettings,
    pub asr_train: AsrTrainSettings,
    pub decode: DecodeSettings,
    #[serde(default)]
    pub mos: Option<MosSettings>,
    pub bootstrap: BootstrapSettings,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn resolve_paths(table: &mut toml::Table, dir: &Path) {
    if let Some(toml::Value::Table(paths)) = table.get_mut("paths") {
        for (_, v) in paths.iter_mut() {
            if let toml::Value::String(s) = v {
                let p = Path::new(s.as_str());
                if p.is_relative() {
                    *s = dir.join(p).display().to_string();
                }
            }
        }
    }
}

fn load_table(path: &Path, chain: &mut Vec<PathBuf>) -> Result<toml::Table, PipelineError> {
    let canonical = path
        .canonicalize()
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    if chain.contains(&canonical) {
        return Err(PipelineError::Config(format!("`extends` cycle through {}", path.display())));
    }
    chain.push(canonical.clone());
    let text = std::fs::read_to_string(&canonical)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let dir = canonical.parent().unwrap_or(Path::new("."));
    resolve_paths(&mut table, dir);
    match table.remove("extends") {
        None => Ok(table),
        Some(toml::Value::String(parent)) => {
            let mut base = load_table(&dir.join(parent), chain)?;
            merge(&mut base, table);
            Ok(base)
        }
        Some(_) => Err(PipelineError::Config(format!("{}: `extends` must be a path", path.display()))),
    }
}

impl ExperimentConfig {
    /// Loads `path` and its `extends` chain, then validates the result.
    /// Relative entries of `[paths]` are resolved against the file that
    /// sets them.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let table = load_table(path, &mut Vec::new())?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (what, p) in [("manifest", Some(&self.paths.manifest)), ("lexicon", Some(&self.paths.lexicon))]
            .into_iter()
            .chain([("new_texts", self.paths.new_texts.as_ref())])
        {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("{what} path {} does not exist", p.display()));
                }
            }
        }
        self.features.tts.validate()?;
        self.features.asr.validate()?;
        if self.features.tts.n_mels != self.features.asr.n_mels {
            return bad("TTS and ASR features must have the same number of mel bins".into());
        }
        if self.features.tts.sample_rate_hz != self.features.asr.sample_rate_hz {
            return bad("TTS and ASR features must share a sample rate".into());
        }
        for (name, dec) in &self.decoders {
            if dec.variant().name() != name {
                return bad(format!("decoders.{name} holds a {} decoder", dec.variant()));
            }
        }
        for name in self.tts_train.schedule_overrides.keys() {
            name.parse::<Variant>()?;
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.data.test_set.is_empty() {
            return bad("test set name must not be empty".into());
        }
        self.sampling.validate()?;
        self.align.schedule.validate()?;
        self.tts_train.schedule.validate()?;
        for s in self.tts_train.schedule_overrides.values() {
            s.validate()?;
        }
        self.asr_train.schedule.validate()?;
        if self.decode.beam == 0 {
            return bad("beam width must be at least 1".into());
        }
        if self.decode.lm_order == 0 {
            return bad("LM order must be at least 1".into());
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return bad(format!("bootstrap level {} outside (0, 1)", self.bootstrap.level));
        }
        if let Some(m) = &self.mos {
            if m.command.is_some() == m.url.is_some() {
                return bad("mos needs exactly one of `command` and `url`".into());
            }
        }
        Ok(())
    }

    /// Hash of the whole configuration.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn decoder(&self, variant: Variant) -> Result<&DecoderConfig, PipelineError> {
        self.decoders
            .get(variant.name())
            .ok_or_else(|| PipelineError::Config(format!("no [decoders.{variant}] section")))
    }

    pub fn tts_config(&self, variant: Variant, vocab_size: usize, num_speakers: usize) -> Result<TtsConfig, PipelineError> {
        let cfg = TtsConfig {
            n_mels: self.features.tts.n_mels,
            trunk: self.trunk.to_config(vocab_size, num_speakers),
            decoder: self.decoder(variant)?.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tts_train_config(&self, variant: Variant, seed: u64) -> TrainConfig {
        let t = &self.tts_train;
        TrainConfig {
            batch_size: t.batch_size,
            schedule: t.schedule_overrides.get(variant.name()).copied().unwrap_or(t.schedule),
            optimizer: t.optimizer,
            clip_norm: t.clip_norm,
            seed,
        }
    }

    pub fn align_train_config(&self, seed: u64) -> TrainConfig {
        let a = &self.align;
        TrainConfig {
            batch_size: a.batch_size,
            schedule: a.schedule,
            optimizer: a.optimizer,
            clip_norm: a.clip_norm,
            seed,
        }
    }

    pub fn asr_config(&self, vocab: Vocab) -> Result<AsrConfig, PipelineError> {
        let a = &self.asr;
        let cfg = AsrConfig {
            n_mels: self.features.asr.n_mels,
            vocab,
            model_dim: a.model_dim,
            num_blocks: a.num_blocks,
            heads: a.heads,
            ffn_mult: a.ffn_mult,
            conv_kernel: a.conv_kernel,
            dropout: a.dropout,
            frontend_channels: a.frontend_channels,
            subsampling_factor: a.subsampling_factor,
            specaugment: a.specaugment,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn asr_train_config(&self, seed: u64) -> AsrTrainConfig {
        let a = &self.asr_train;
        AsrTrainConfig {
            batch_size: a.batch_size,
            schedule: a.schedule,
            optimizer: a.optimizer,
            clip_norm: a.clip_norm,
            augment: a.augment,
            seed,
        }
    }

    pub fn beam_config(&self) -> BeamConfig {
        BeamConfig {
            beam: self.decode.beam,
            lm_weight: self.decode.lm_weight,
            scoring: Scoring::Sum,
        }
    }
}
