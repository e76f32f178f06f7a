use rand::seq::SliceRandom;
use synthasr_nn::{derive_seed, rng};

use crate::{CorpusManifest, EvalError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CvSplit {
    pub train: CorpusManifest,
    pub cv: CorpusManifest,
}

/// Hold out `k` utterances of every speaker. Each speaker's choice is drawn
/// from a seed derived from `seed` and the speaker id; both halves keep
/// manifest order.
pub fn cv_split(manifest: &CorpusManifest, k: usize, seed: u64) -> Result<CvSplit, EvalError> {
    let mut held = std::collections::HashSet::new();
    for spk in manifest.speakers() {
        let mut ids: Vec<&str> = manifest
            .utterances()
            .iter()
            .filter(|u| &u.speaker == spk)
            .map(|u| u.id.as_str())
            .collect();
        if ids.is_empty() {
            continue;
        }
        if k > 0 && ids.len() <= k {
            return Err(EvalError::TooFewUtterances {
                speaker: spk.clone(),
                count: ids.len(),
                k,
            });
        }
        ids.shuffle(&mut rng(derive_seed(seed, spk)));
        held.extend(ids.into_iter().take(k).map(str::to_string));
    }
    Ok(CvSplit {
        train: manifest.subset(|u| !held.contains(&u.id)),
        cv: manifest.subset(|u| held.contains(&u.id)),
    })
}
