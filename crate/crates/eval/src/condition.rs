use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use synthasr_nn::{derive_seed, rng};

use crate::{CorpusManifest, EvalError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    /// Training texts with their original speakers.
    SameTextSameSpeaker,
    /// Training texts with shuffled speaker assignments.
    SameTextShuffledSpeaker,
    /// New texts, as many as training utterances.
    NewText,
}

impl ConditionKind {
    pub const ALL: [Self; 3] = [Self::SameTextSameSpeaker, Self::SameTextShuffledSpeaker, Self::NewText];

    pub fn letter(self) -> &'static str {
        match self {
            Self::SameTextSameSpeaker => "a",
            Self::SameTextShuffledSpeaker => "b",
            Self::NewText => "c",
        }
    }
}

impl std::str::FromStr for ConditionKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "a" => Ok(Self::SameTextSameSpeaker),
            "b" => Ok(Self::SameTextShuffledSpeaker),
            "c" => Ok(Self::NewText),
            _ => Err(EvalError::Invalid(format!("unknown condition `{s}`, expected a, b or c"))),
        }
    }
}

impl std::fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.letter())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisCondition {
    pub kind: ConditionKind,
    pub seed: u64,
    /// Normalized texts for condition c.
    pub new_texts: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisJob {
    pub utt_id: String,
    pub text: String,
    pub speaker: String,
}

/// Synthesis jobs of a condition, in training-manifest order.
///
/// Condition b redraws its seeded permutation until at least one
/// utterance changes speaker; with a single distinct speaker that is
/// impossible and the assignment is kept.
pub fn build_condition(train: &CorpusManifest, cond: &SynthesisCondition) -> Result<Vec<SynthesisJob>, EvalError> {
    let utts = train.utterances();
    let speakers: Vec<&str> = utts.iter().map(|u| u.speaker.as_str()).collect();
    match cond.kind {
        ConditionKind::SameTextSameSpeaker => Ok(utts
            .iter()
            .map(|u| SynthesisJob {
                utt_id: u.id.clone(),
                text: u.text.clone(),
                speaker: u.speaker.clone(),
            })
            .collect()),
        ConditionKind::SameTextShuffledSpeaker => {
            let distinct = speakers.iter().collect::<std::collections::BTreeSet<_>>().len();
            let mut assigned = speakers.clone();
            if distinct > 1 {
                let mut attempt = 0u64;
                while assigned == speakers {
                    assigned.shuffle(&mut rng(derive_seed(cond.seed, &format!("shuffle{attempt}"))));
                    attempt += 1;
                }
            }
            Ok(utts
                .iter()
                .zip(assigned)
                .map(|(u, s)| SynthesisJob {
                    utt_id: u.id.clone(),
                    text: u.text.clone(),
                    speaker: s.to_string(),
                })
                .collect())
        }
        ConditionKind::NewText => {
            let texts = cond
                .new_texts
                .as_ref()
                .ok_or_else(|| EvalError::Invalid("condition c needs a text source".into()))?;
            if texts.len() != utts.len() {
                return Err(EvalError::TextCount {
                    expected: utts.len(),
                    got: texts.len(),
                });
            }
            Ok(texts
                .iter()
                .zip(&speakers)
                .enumerate()
                .map(|(i, (t, s))| SynthesisJob {
                    utt_id: format!("new-{i:06}"),
                    text: t.clone(),
                    speaker: s.to_string(),
                })
                .collect())
        }
    }
}
