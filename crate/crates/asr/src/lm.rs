use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::AsrError;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Word-level language model queried during search.
pub trait LmScorer: Send + Sync {
    /// Model order; at most `order - 1` history words are used.
    fn order(&self) -> usize;

    /// `log P(word | history)`; `word` may be [`EOS`]. Never positive.
    fn log_prob(&self, history: &[&str], word: &str) -> f64;

    /// Sum over a word sequence, closed by the end-of-sentence token.
    fn score_sentence(&self, words: &[&str]) -> f64 {
        let mut total = 0.0;
        for i in 0..=words.len() {
            let w = words.get(i).copied().unwrap_or(EOS);
            total += self.log_prob(&words[..i], w);
        }
        total
    }
}

/// Count-based n-gram model with add-k smoothing of every conditional
/// distribution. Words outside the training vocabulary map to [`UNK`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgramLm {
    order: usize,
    k: f64,
    vocab: BTreeSet<String>,
    /// History (space-joined, padded with `<s>`) to successor counts.
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

impl NgramLm {
    pub fn train<S: AsRef<str>>(sentences: &[Vec<S>], order: usize, k: f64) -> Result<Self, AsrError> {
        if order == 0 {
            return Err(AsrError::Lm("order must be at least 1".into()));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(AsrError::Lm(format!("smoothing constant {k} must be positive")));
        }
        let mut vocab: BTreeSet<String> = [EOS, UNK].iter().map(|s| s.to_string()).collect();
        for s in sentences {
            for w in s {
                let w = w.as_ref();
                if [BOS, EOS, UNK].contains(&w) {
                    return Err(AsrError::Lm(format!("reserved token `{w}` in training text")));
                }
                vocab.insert(w.to_string());
            }
        }
        let mut lm = Self {
            order,
            k,
            vocab,
            counts: BTreeMap::new(),
        };
        for s in sentences {
            let words: Vec<&str> = s.iter().map(|w| w.as_ref()).collect();
            for i in 0..=words.len() {
                let w = words.get(i).copied().unwrap_or(EOS);
                let h = lm.history_key(&words[..i]);
                *lm.counts.entry(h).or_default().entry(w.to_string()).or_default() += 1;
            }
        }
        Ok(lm)
    }

    /// Predictable tokens: training words, [`UNK`] and [`EOS`].
    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    fn map<'a>(&self, w: &'a str) -> &'a str {
        if self.vocab.contains(w) {
            w
        } else {
            UNK
        }
    }

    fn history_key(&self, history: &[&str]) -> String {
        let n = self.order - 1;
        let mut h: Vec<&str> = history.iter().rev().take(n).map(|w| self.map(w)).collect();
        h.resize(n, BOS);
        h.reverse();
        h.join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<(), AsrError> {
        let text = serde_json::to_string(self).map_err(|e| AsrError::Lm(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AsrError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| AsrError::Lm(format!("{}: {e}", path.display())))
    }
}

impl LmScorer for NgramLm {
    fn order(&self) -> usize {
        self.order
    }

    fn log_prob(&self, history: &[&str], word: &str) -> f64 {
        let succ = self.counts.get(&self.history_key(history));
        let total: u64 = succ.map_or(0, |m| m.values().sum());
        let c = succ.and_then(|m| m.get(self.map(word))).copied().unwrap_or(0);
        ((c as f64 + self.k) / (total as f64 + self.k * self.vocab.len() as f64)).ln()
    }
}
