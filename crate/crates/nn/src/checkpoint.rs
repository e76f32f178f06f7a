//! Checkpoint files: one line of JSON header, a newline, then every
//! parameter's values as little-endian `f32` in header order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{NnError, ParamStore, Real, Tensor};

pub const FORMAT: &str = "synthasr-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub config_hash: String,
    pub epoch: u64,
    pub params: Vec<ParamEntry>,
    /// Free-form model metadata (configs, normalization statistics, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Short hex digest of any serializable configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}

pub fn write_checkpoint<R: Real, W: Write>(
    mut w: W,
    store: &ParamStore<R>,
    config_hash: &str,
    epoch: u64,
    extra: serde_json::Value,
) -> Result<(), NnError> {
    let header = CheckpointHeader {
        format: FORMAT.to_string(),
        config_hash: config_hash.to_string(),
        epoch,
        params: store
            .iter()
            .map(|(_, p)| ParamEntry {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
        extra,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(store.num_scalars() * 4);
    for (_, p) in store.iter() {
        for &x in p.value.data() {
            buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Real, Rd: Read>(
    r: Rd,
) -> Result<(CheckpointHeader, ParamStore<R>), NnError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| NnError::Checkpoint(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(NnError::Checkpoint(format!(
            "unsupported format `{}`",
            header.format
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected: usize = header.params.iter().map(|p| p.rows * p.cols * 4).sum();
    if payload.len() != expected {
        return Err(NnError::Checkpoint(format!(
            "payload has {} bytes, header describes {expected}",
            payload.len()
        )));
    }
    let mut store = ParamStore::new();
    let mut off = 0;
    for p in &header.params {
        let n = p.rows * p.cols;
        let data = payload[off..off + n * 4]
            .chunks_exact(4)
            .map(|b| R::from_f64_lossy(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        off += n * 4;
        store.add(p.name.clone(), Tensor::new(p.rows, p.cols, data))?;
    }
    Ok((header, store))
}

pub fn save_checkpoint<R: Real>(
    path: &Path,
    store: &ParamStore<R>,
    config_hash: &str,
    epoch: u64,
    extra: serde_json::Value,
) -> Result<(), NnError> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, store, config_hash, epoch, extra)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint<R: Real>(path: &Path) -> Result<(CheckpointHeader, ParamStore<R>), NnError> {
    read_checkpoint(fs::File::open(path)?)
}
