use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::EvalError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub audio: Option<PathBuf>,
    /// Normalized text: lowercase words separated by single spaces.
    pub text: String,
}

impl Utterance {
    pub fn words(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

/// Lowercase, drop punctuation other than in-word apostrophes, collapse
/// whitespace.
pub fn normalize_text(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect::<String>()
        .to_lowercase();
    cleaned
        .split_whitespace()
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    utterances: Vec<Utterance>,
    speakers: Vec<String>,
}

impl CorpusManifest {
    /// Checks id uniqueness and that every speaker is in `speakers`.
    pub fn new(utterances: Vec<Utterance>, speakers: Vec<String>) -> Result<Self, EvalError> {
        let table: HashSet<&str> = speakers.iter().map(String::as_str).collect();
        if table.len() != speakers.len() {
            return Err(EvalError::Invalid("duplicate speaker in table".into()));
        }
        let mut seen = HashSet::new();
        for u in &utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(EvalError::DuplicateId(u.id.clone()));
            }
            if !table.contains(u.speaker.as_str()) {
                return Err(EvalError::UnknownSpeaker {
                    utt: u.id.clone(),
                    speaker: u.speaker.clone(),
                });
            }
        }
        Ok(Self { utterances, speakers })
    }

    /// Speaker table taken from the utterances in order of first use.
    pub fn from_utterances(utterances: Vec<Utterance>) -> Result<Self, EvalError> {
        let mut speakers: Vec<String> = Vec::new();
        for u in &utterances {
            if !speakers.contains(&u.speaker) {
                speakers.push(u.speaker.clone());
            }
        }
        Self::new(utterances, speakers)
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.utterances.iter().map(|u| u.id.as_str()).collect()
    }

    /// Same speaker table, utterances filtered.
    pub fn subset(&self, keep: impl Fn(&Utterance) -> bool) -> Self {
        Self {
            utterances: self.utterances.iter().filter(|u| keep(u)).cloned().collect(),
            speakers: self.speakers.clone(),
        }
    }

    /// `utt_id<TAB>speaker_id<TAB>audio_path<TAB>text` per line; `-` marks
    /// a missing audio path. Text is normalized on read.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut utts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(EvalError::Manifest {
                    line: i + 1,
                    reason: format!("expected 4 tab-separated fields, got {}", fields.len()),
                });
            }
            let (id, speaker, audio, raw) = (fields[0].trim(), fields[1].trim(), fields[2].trim(), fields[3]);
            if id.is_empty() || speaker.is_empty() {
                return Err(EvalError::Manifest {
                    line: i + 1,
                    reason: "empty utterance or speaker id".into(),
                });
            }
            utts.push(Utterance {
                id: id.to_string(),
                speaker: speaker.to_string(),
                audio: (!audio.is_empty() && audio != "-").then(|| PathBuf::from(audio)),
                text: normalize_text(raw),
            });
        }
        Self::from_utterances(utts)
    }

    pub fn to_text(&self) -> String {
        self.utterances
            .iter()
            .map(|u| {
                let audio = u.audio.as_ref().map_or("-".to_string(), |p| p.display().to_string());
                format!("{}\t{}\t{}\t{}\n", u.id, u.speaker, audio, u.text)
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
