//! Corpus manifests, cross-validation splits, the three synthesis
//! conditions, word error rate, bootstrap intervals, an external MOS client
//! and report tables.

mod bootstrap;
mod condition;
mod error;
mod manifest;
pub mod mos;
mod report;
mod split;
mod wer;

pub use bootstrap::{bootstrap_ci, mean};
pub use condition::{build_condition, ConditionKind, SynthesisCondition, SynthesisJob};
pub use error::EvalError;
pub use manifest::{normalize_text, CorpusManifest, Utterance};
pub use mos::{MosBackend, MosClient, MosError, MosSummary};
pub use report::{parse_csv, render_report, to_csv, MetricRow, Report};
pub use split::{cv_split, CvSplit};
pub use wer::{align, wer, EditCounts, WerReport};

/// Recognizer used to score synthesized audio.
pub trait Recognizer<A> {
    fn recognize(&self, input: &A) -> Result<Vec<String>, String>;
}

/// WER of a trusted recognizer on synthesized versions of the `cv`
/// utterances. Utterances without synthesized audio count as full
/// deletions.
pub fn swer<A>(
    cv: &CorpusManifest,
    synthesized: &std::collections::BTreeMap<String, A>,
    scorer: &dyn Recognizer<A>,
) -> Result<WerReport, EvalError> {
    let mut hyps = std::collections::BTreeMap::new();
    let mut refs = std::collections::BTreeMap::new();
    for u in cv.utterances() {
        refs.insert(u.id.clone(), u.words().iter().map(|w| w.to_string()).collect());
        if let Some(a) = synthesized.get(&u.id) {
            let words = scorer
                .recognize(a)
                .map_err(|e| EvalError::Invalid(format!("recognizing {}: {e}", u.id)))?;
            hyps.insert(u.id.clone(), words);
        }
    }
    wer(&hyps, &refs)
}
