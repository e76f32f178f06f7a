use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::AsrError;

/// Suffix marking the word-final variant of a phoneme.
pub const EOW: char = '#';
pub const BLANK: &str = "<blank>";

/// Output symbols of the recognizer: blank at id 0, then phonemes and their
/// end-of-word variants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = AsrError;

    fn try_from(symbols: Vec<String>) -> Result<Self, AsrError> {
        Self::from_symbols(symbols)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.symbols
    }
}

impl Vocab {
    /// Blank, then each phoneme `p` followed by `p#`.
    pub fn from_phonemes<S: AsRef<str>>(phonemes: &[S]) -> Result<Self, AsrError> {
        let mut symbols = vec![BLANK.to_string()];
        for p in phonemes {
            let p = p.as_ref();
            if p.is_empty() || p.ends_with(EOW) || p == BLANK {
                return Err(AsrError::Config(format!("invalid phoneme symbol `{p}`")));
            }
            symbols.push(p.to_string());
            symbols.push(format!("{p}{EOW}"));
        }
        Self::from_symbols(symbols)
    }

    /// Explicit symbol list; the first entry must be the blank.
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self, AsrError> {
        if symbols.first().map(String::as_str) != Some(BLANK) {
            return Err(AsrError::Config("vocabulary must start with the blank".into()));
        }
        let mut index = HashMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(AsrError::Config(format!("duplicate symbol `{s}`")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn blank(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn is_word_end(&self, id: usize) -> bool {
        self.symbol(id).is_some_and(|s| s != BLANK && s.ends_with(EOW))
    }

    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<usize>, AsrError> {
        symbols
            .iter()
            .map(|s| {
                self.id(s.as_ref())
                    .ok_or_else(|| AsrError::UnknownPhoneme(s.as_ref().to_string()))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().filter_map(|&i| self.symbol(i)).map(str::to_string).collect()
    }
}

/// Word to phoneme-sequence map; the final phoneme of every pronunciation
/// carries the end-of-word marker.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a pronunciation given without markers; the marker is appended to
    /// the last phoneme.
    pub fn insert_plain<S: AsRef<str>>(&mut self, word: &str, phonemes: &[S]) -> Result<(), AsrError> {
        let mut pron: Vec<String> = phonemes.iter().map(|p| p.as_ref().to_string()).collect();
        match pron.last_mut() {
            Some(last) => last.push(EOW),
            None => {
                return Err(AsrError::Lexicon {
                    line: 0,
                    reason: format!("empty pronunciation for `{word}`"),
                })
            }
        }
        self.insert(word, pron, 0)
    }

    fn insert(&mut self, word: &str, pron: Vec<String>, line: usize) -> Result<(), AsrError> {
        let err = |reason: String| AsrError::Lexicon { line, reason };
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(err(format!("invalid word `{word}`")));
        }
        let Some((last, init)) = pron.split_last() else {
            return Err(err(format!("empty pronunciation for `{word}`")));
        };
        if !last.ends_with(EOW) || last.len() == 1 {
            return Err(err(format!("`{word}` must end in a marked phoneme")));
        }
        if let Some(p) = init.iter().find(|p| p.ends_with(EOW) || p.is_empty()) {
            return Err(err(format!("`{word}` has marker inside the word at `{p}`")));
        }
        if self.entries.insert(word.to_string(), pron).is_some() {
            return Err(err(format!("duplicate word `{word}`")));
        }
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    /// Base phonemes (markers stripped) used by any pronunciation.
    pub fn phonemes(&self) -> BTreeSet<String> {
        self.entries
            .values()
            .flatten()
            .map(|p| p.trim_end_matches(EOW).to_string())
            .collect()
    }

    /// `WORD<TAB>PH1 PH2 ... PHn#` per line; blank lines and `;` comments
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, AsrError> {
        let mut lex = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let (word, pron) = line.split_once('\t').ok_or_else(|| AsrError::Lexicon {
                line: i + 1,
                reason: "expected WORD<TAB>PHONEMES".into(),
            })?;
            let pron: Vec<String> = pron.split_whitespace().map(str::to_string).collect();
            lex.insert(word.trim(), pron, i + 1)?;
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(w, p)| format!("{w}\t{}\n", p.join(" ")))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, AsrError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), AsrError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Every symbol used must exist in `vocab`.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<(), AsrError> {
        for p in self.entries.values().flatten() {
            if vocab.id(p).is_none() {
                return Err(AsrError::UnknownPhoneme(p.clone()));
            }
        }
        Ok(())
    }
}

/// Fallback pronunciation source for words missing from a lexicon.
pub trait G2p {
    /// Unmarked phonemes, or `None` when the word cannot be converted.
    fn pronounce(&self, word: &str) -> Option<Vec<String>>;
}

/// One phoneme per letter, for inventories whose phoneme names are single
/// letters.
#[derive(Clone, Debug)]
pub struct LetterG2p {
    pub phonemes: BTreeSet<String>,
}

impl G2p for LetterG2p {
    fn pronounce(&self, word: &str) -> Option<Vec<String>> {
        let out: Option<Vec<String>> = word
            .chars()
            .map(|c| {
                let s = c.to_lowercase().to_string();
                self.phonemes.contains(&s).then_some(s)
            })
            .collect();
        out.filter(|p| !p.is_empty())
    }
}

/// Marked phoneme string of a word sequence. Every missing word is reported
/// at once when no fallback converts it.
pub fn transcribe<S: AsRef<str>>(
    words: &[S],
    lexicon: &Lexicon,
    g2p: Option<&dyn G2p>,
) -> Result<Vec<String>, AsrError> {
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for w in words {
        let w = w.as_ref();
        if let Some(p) = lexicon.get(w) {
            out.extend_from_slice(p);
            continue;
        }
        match g2p.and_then(|g| g.pronounce(w)) {
            Some(mut p) => {
                if let Some(last) = p.last_mut() {
                    last.push(EOW);
                }
                out.extend(p);
            }
            None => missing.push(w.to_string()),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        missing.sort();
        missing.dedup();
        Err(AsrError::UnknownWords(missing))
    }
}
