use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::EvalError;

/// Edit operations of one minimal alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Levenshtein alignment of `hyp` against `reference`. Among minimal
/// alignments the backtrace prefers a match or substitution, then a
/// deletion, then an insertion.
pub fn align<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, v) in d[0].iter_mut().enumerate() {
        *v = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1].as_ref() != hyp[j - 1].as_ref());
            d[i][j] = (d[i - 1][j - 1] + cost).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut c = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hyp[j - 1].as_ref();
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                if !same {
                    c.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub rate: f64,
    pub edits: EditCounts,
    pub reference_words: usize,
    /// Reference ids without a hypothesis; scored as full deletions.
    pub missing: Vec<String>,
    /// Hypothesis ids without a reference; ignored.
    pub unmatched: Vec<String>,
}

/// Corpus word error rate: summed edit distance over summed reference
/// length.
pub fn wer(
    hypotheses: &BTreeMap<String, Vec<String>>,
    references: &BTreeMap<String, Vec<String>>,
) -> Result<WerReport, EvalError> {
    let reference_words: usize = references.values().map(Vec::len).sum();
    if reference_words == 0 {
        return Err(EvalError::EmptyReferences);
    }
    let mut edits = EditCounts::default();
    let mut missing = Vec::new();
    for (id, r) in references {
        let c = match hypotheses.get(id) {
            Some(h) => align(r, h),
            None => {
                missing.push(id.clone());
                EditCounts {
                    deletions: r.len(),
                    ..Default::default()
                }
            }
        };
        edits.substitutions += c.substitutions;
        edits.insertions += c.insertions;
        edits.deletions += c.deletions;
    }
    let unmatched = hypotheses.keys().filter(|k| !references.contains_key(*k)).cloned().collect();
    Ok(WerReport {
        rate: edits.errors() as f64 / reference_words as f64,
        edits,
        reference_words,
        missing,
        unmatched,
    })
}
