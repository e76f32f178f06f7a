//! Artifact directory layout, content hashes and run manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use synthasr_eval::ConditionKind;
use synthasr_tts::Variant;

use crate::PipelineError;

/// A TTS system: a decoder variant, trained or left at initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct System {
    pub variant: Variant,
    pub untrained: bool,
}

impl System {
    pub fn trained(variant: Variant) -> Self {
        Self {
            variant,
            untrained: false,
        }
    }

    pub fn control(variant: Variant) -> Self {
        Self {
            variant,
            untrained: true,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.untrained {
            write!(f, "{}-untrained", self.variant)
        } else {
            write!(f, "{}", self.variant)
        }
    }
}

/// Training data of a recognizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AsrData {
    Real,
    Synthetic(System, ConditionKind),
}

impl fmt::Display for AsrData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsrData::Real => f.write_str("real"),
            AsrData::Synthetic(s, c) => write!(f, "{s}-{c}"),
        }
    }
}

/// Synthesized utterance set of a system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthSet {
    Condition(ConditionKind),
    /// The held-out utterances, used for sWER and MOS.
    Heldout,
}

impl fmt::Display for SynthSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthSet::Condition(c) => write!(f, "{c}"),
            SynthSet::Heldout => f.write_str("heldout"),
        }
    }
}

pub const RUN_MANIFEST: &str = "run.json";
pub const SET_MANIFEST: &str = "manifest.tsv";

#[derive(Clone, Debug)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into() }
    }

    pub fn align_dir(&self) -> PathBuf {
        self.out.join("align")
    }

    pub fn durations(&self) -> PathBuf {
        self.align_dir().join("durations.bin")
    }

    pub fn tts_dir(&self, system: System) -> PathBuf {
        self.out.join("tts").join(system.to_string())
    }

    pub fn tts_checkpoint(&self, system: System) -> PathBuf {
        self.tts_dir(system).join("model.ckpt")
    }

    pub fn synth_dir(&self, system: System, set: SynthSet) -> PathBuf {
        self.out.join("synth").join(system.to_string()).join(set.to_string())
    }

    pub fn asr_dir(&self, data: AsrData) -> PathBuf {
        self.out.join("asr").join(data.to_string())
    }

    pub fn asr_checkpoint(&self, data: AsrData) -> PathBuf {
        self.asr_dir(data).join("model.ckpt")
    }

    pub fn eval_dir(&self, data: AsrData) -> PathBuf {
        self.out.join("eval").join(data.to_string())
    }

    pub fn metrics(&self, data: AsrData) -> PathBuf {
        self.eval_dir(data).join("metrics.json")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }

    /// `path` relative to the output root when it lies below it.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.out).unwrap_or(path).display().to_string()
    }
}

/// Errors with the producing command when `path` is absent.
pub fn require(path: &Path, producer: &str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact {
            path: path.to_path_buf(),
            producer: producer.to_string(),
        })
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    Ok(hash_bytes(&std::fs::read(path)?))
}

/// Provenance of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    /// Seeds derived for this command, by purpose.
    pub seeds: BTreeMap<String, u64>,
    pub variant: Option<String>,
    pub condition: Option<String>,
    /// Content hash of every input file.
    pub inputs: BTreeMap<String, String>,
    /// Content hash of every output file.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &crate::ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config_name: cfg.name.clone(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            seeds: BTreeMap::new(),
            variant: None,
            condition: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, layout: &Layout, path: &Path) -> Result<(), PipelineError> {
        self.inputs.insert(layout.relative(path), hash_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, layout: &Layout, path: &Path) -> Result<(), PipelineError> {
        self.outputs.insert(layout.relative(path), hash_file(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        let path = dir.join(RUN_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
