//! Duration archive: `DURA`, format version (u32), utterance count (u32),
//! 8-byte vocabulary hash, then per utterance the id length (u32), the
//! UTF-8 id, the phoneme count N (u32) and N durations (u32). All integers
//! are little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use crate::TtsError;

const MAGIC: &[u8; 4] = b"DURA";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DurationArchive {
    pub vocab_hash: [u8; 8],
    pub entries: BTreeMap<String, Vec<u32>>,
}

impl DurationArchive {
    pub fn new(vocab_hash: [u8; 8]) -> Self {
        Self {
            vocab_hash,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, durations: Vec<u32>) {
        self.entries.insert(utt_id.into(), durations);
    }

    pub fn get(&self, utt_id: &str) -> Option<&[u32]> {
        self.entries.get(utt_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.vocab_hash);
        for (id, d) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(d.len() as u32).to_le_bytes());
            for v in d {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TtsError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(TtsError::Archive("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(TtsError::Archive(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut vocab_hash = [0u8; 8];
        vocab_hash.copy_from_slice(r.take(8)?);
        let mut archive = Self::new(vocab_hash);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| TtsError::Archive("utterance id is not UTF-8".into()))?
                .to_string();
            let n = r.u32()? as usize;
            let d = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            if archive.entries.insert(id.clone(), d).is_some() {
                return Err(TtsError::Archive(format!("duplicate utterance `{id}`")));
            }
        }
        if r.pos != bytes.len() {
            return Err(TtsError::Archive("trailing bytes".into()));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<(), TtsError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TtsError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TtsError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(TtsError::Archive("truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TtsError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// 8-byte digest of a symbol inventory, used to tie archives to a vocabulary.
pub fn vocab_hash(symbols: &[String]) -> [u8; 8] {
    let h = synthasr_nn::checkpoint::config_hash(&symbols);
    let mut out = [0u8; 8];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&h[2 * i..2 * i + 2], 16).expect("hex digest");
    }
    out
}
