//! Greedy and prefix-beam CTC decoding.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use synthasr_nn::{Real, Tensor};

use crate::{AsrError, Lexicon, LmScorer, Vocab};

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-frame argmax, repeats collapsed, blanks dropped. Ties pick the
/// lowest id.
pub fn greedy_decode<R: Real>(log_probs: &Tensor<R>, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..log_probs.rows() {
        let row = log_probs.row(t);
        let mut best = 0;
        for (k, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = k;
            }
        }
        if prev != Some(best) && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

/// How alignments of the same labeling combine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Total probability over alignments.
    #[default]
    Sum,
    /// Best single alignment.
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Hypotheses kept per frame; `usize::MAX` disables pruning.
    pub beam: usize,
    pub lm_weight: f64,
    #[serde(default)]
    pub scoring: Scoring,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 16,
            lm_weight: 0.5,
            scoring: Scoring::Sum,
        }
    }
}

/// Prefix tree over marked pronunciations. Nodes reached through a
/// word-final symbol hold the words spelled by the path.
#[derive(Clone, Debug)]
pub struct LexiconTrie {
    children: Vec<BTreeMap<usize, usize>>,
    words: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl LexiconTrie {
    pub fn new(lexicon: &Lexicon, vocab: &Vocab) -> Result<Self, AsrError> {
        if lexicon.is_empty() {
            return Err(AsrError::Config("empty lexicon".into()));
        }
        let mut trie = Self {
            children: vec![BTreeMap::new()],
            words: vec![Vec::new()],
            names: Vec::new(),
        };
        for (word, pron) in lexicon.iter() {
            let ids = vocab.encode(pron)?;
            let mut node = 0;
            for id in ids {
                node = match trie.children[node].get(&id) {
                    Some(&n) => n,
                    None => {
                        trie.children.push(BTreeMap::new());
                        trie.words.push(Vec::new());
                        let n = trie.children.len() - 1;
                        trie.children[node].insert(id, n);
                        n
                    }
                };
            }
            trie.words[node].push(trie.names.len());
            trie.names.push(word.to_string());
        }
        Ok(trie)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.names[id]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub words: Vec<String>,
    /// Ranking score: CTC log-score plus weighted LM log-probability.
    pub score: f64,
    pub ctc_score: f64,
    pub lm_score: f64,
}

#[derive(Clone, Debug)]
struct Entry {
    p_b: f64,
    p_nb: f64,
    node: usize,
    lm: f64,
}

impl Entry {
    fn ctc(&self, scoring: Scoring) -> f64 {
        combine(scoring, self.p_b, self.p_nb)
    }
}

fn combine(scoring: Scoring, a: f64, b: f64) -> f64 {
    match scoring {
        Scoring::Sum => log_add(a, b),
        Scoring::Max => a.max(b),
    }
}

type Key = (Vec<usize>, Vec<usize>);

/// Higher score first, then lexicographic word order, then labels.
fn rank(a: (&Key, f64), b: (&Key, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| a.0 .1.cmp(&b.0 .1))
        .then_with(|| a.0 .0.cmp(&b.0 .0))
}

/// Prefix beam search over a `T×V` log-probability matrix. With a trie the
/// label sequences are restricted to concatenated pronunciations and only
/// hypotheses ending on a word boundary are returned. Results are sorted
/// best first.
pub fn beam_search<R: Real>(
    log_probs: &Tensor<R>,
    blank: usize,
    cfg: &BeamConfig,
    trie: Option<&LexiconTrie>,
    lm: Option<&dyn LmScorer>,
) -> Result<Vec<Hypothesis>, AsrError> {
    if cfg.beam == 0 {
        return Err(AsrError::BeamWidth);
    }
    if !cfg.lm_weight.is_finite() {
        return Err(AsrError::Config("lm weight must be finite".into()));
    }
    let (frames, vocab) = log_probs.shape();
    if blank >= vocab {
        return Err(AsrError::UnknownLabel { id: blank, size: vocab });
    }
    let names = |ids: &[usize]| -> Vec<&str> {
        let t = trie.expect("words only exist with a lexicon");
        ids.iter().map(|&i| t.word(i)).collect()
    };
    let ninf = f64::NEG_INFINITY;
    let sc = cfg.scoring;
    let mut beam: BTreeMap<Key, Entry> = BTreeMap::new();
    beam.insert(
        (Vec::new(), Vec::new()),
        Entry {
            p_b: 0.0,
            p_nb: ninf,
            node: 0,
            lm: 0.0,
        },
    );
    let all: Vec<usize> = (0..vocab).filter(|&k| k != blank).collect();
    for t in 0..frames {
        let row: Vec<f64> = log_probs.row(t).iter().map(|v| v.as_f64()).collect();
        let mut next: BTreeMap<Key, Entry> = BTreeMap::new();
        let add = |next: &mut BTreeMap<Key, Entry>, key: Key, proto: &Entry, b: f64, nb: f64| {
            let e = next.entry(key).or_insert_with(|| Entry {
                p_b: ninf,
                p_nb: ninf,
                ..proto.clone()
            });
            e.p_b = combine(sc, e.p_b, b);
            e.p_nb = combine(sc, e.p_nb, nb);
        };
        for (key, e) in &beam {
            let total = e.ctc(sc);
            add(&mut next, key.clone(), e, total + row[blank], ninf);
            let last = key.0.last().copied();
            if let Some(l) = last {
                add(&mut next, key.clone(), e, ninf, e.p_nb + row[l]);
            }
            let symbols: Vec<(usize, usize)> = match trie {
                Some(tr) => tr.children[e.node].iter().map(|(&k, &n)| (k, n)).collect(),
                None => all.iter().map(|&k| (k, 0)).collect(),
            };
            for (c, child) in symbols {
                let p = if last == Some(c) { e.p_b } else { total } + row[c];
                if p == ninf {
                    continue;
                }
                let mut labels = key.0.clone();
                labels.push(c);
                let ended = trie.map(|tr| tr.words[child].as_slice()).unwrap_or(&[]);
                if ended.is_empty() {
                    let proto = Entry { node: child, ..e.clone() };
                    add(&mut next, (labels, key.1.clone()), &proto, ninf, p);
                    continue;
                }
                for &w in ended {
                    let mut words = key.1.clone();
                    words.push(w);
                    let lm_gain = match lm {
                        Some(lm) if cfg.lm_weight != 0.0 => {
                            let hist = names(&key.1);
                            cfg.lm_weight * lm.log_prob(&hist, trie.unwrap().word(w))
                        }
                        _ => 0.0,
                    };
                    let proto = Entry {
                        node: 0,
                        lm: e.lm + lm_gain,
                        ..e.clone()
                    };
                    add(&mut next, (labels.clone(), words), &proto, ninf, p);
                }
            }
        }
        if next.len() > cfg.beam {
            let mut ranked: Vec<(Key, Entry)> = next.into_iter().collect();
            ranked.sort_by(|a, b| rank((&a.0, a.1.ctc(sc) + a.1.lm), (&b.0, b.1.ctc(sc) + b.1.lm)));
            ranked.truncate(cfg.beam);
            next = ranked.into_iter().collect();
        }
        beam = next;
    }
    let mut out: Vec<(Key, Hypothesis)> = beam
        .into_iter()
        .filter(|(_, e)| e.node == 0)
        .map(|(key, e)| {
            let ctc = e.ctc(sc);
            let eos = match lm {
                Some(lm) if cfg.lm_weight != 0.0 => {
                    cfg.lm_weight * lm.log_prob(&names(&key.1), crate::lm::EOS)
                }
                _ => 0.0,
            };
            let lm_score = e.lm + eos;
            let words = key.1.iter().map(|&w| trie.unwrap().word(w).to_string()).collect();
            let h = Hypothesis {
                labels: key.0.clone(),
                words,
                score: ctc + lm_score,
                ctc_score: ctc,
                lm_score,
            };
            (key, h)
        })
        .collect();
    out.sort_by(|a, b| rank((&a.0, a.1.score), (&b.0, b.1.score)));
    Ok(out.into_iter().map(|(_, h)| h).collect())
}

/// Best word sequence under lexicon constraint, summed CTC scoring and an
/// optional language model. Empty when no complete word sequence survives.
pub fn beam_decode<R: Real>(
    log_probs: &Tensor<R>,
    blank: usize,
    trie: &LexiconTrie,
    lm: Option<&dyn LmScorer>,
    beam: usize,
    lm_weight: f64,
) -> Result<Vec<String>, AsrError> {
    let cfg = BeamConfig {
        beam,
        lm_weight,
        scoring: Scoring::Sum,
    };
    let hyps = beam_search(log_probs, blank, &cfg, Some(trie), lm)?;
    Ok(hyps.into_iter().next().map(|h| h.words).unwrap_or_default())
}
