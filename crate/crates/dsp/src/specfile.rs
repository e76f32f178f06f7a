//! Binary spectrogram files: a one-line ASCII header
//! `MELSPEC v1 frames=T bins=B config=<hash>` followed by `T·B`
//! little-endian `f32` values in row-major order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use synthasr_nn::Tensor;

use crate::{DspError, FeatureConfig, MelSpectrogram};

const MAGIC: &str = "MELSPEC v1";

pub fn write_mel<W: Write>(mut w: W, mel: &MelSpectrogram) -> Result<(), DspError> {
    writeln!(
        w,
        "{MAGIC} frames={} bins={} config={}",
        mel.num_frames(),
        mel.n_mels(),
        mel.config.hash()
    )?;
    let mut buf = Vec::with_capacity(mel.frames.len() * 4);
    for v in mel.frames.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a spectrogram, checking that it was produced under `config`.
pub fn read_mel<R: Read>(r: R, config: &FeatureConfig) -> Result<MelSpectrogram, DspError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let rest = line
        .trim_end()
        .strip_prefix(MAGIC)
        .ok_or_else(|| DspError::Format("missing MELSPEC header".into()))?;
    let mut frames = None;
    let mut bins = None;
    let mut hash = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("frames", v)) => frames = v.parse::<usize>().ok(),
            Some(("bins", v)) => bins = v.parse::<usize>().ok(),
            Some(("config", v)) => hash = Some(v.to_string()),
            _ => return Err(DspError::Format(format!("unknown header field `{field}`"))),
        }
    }
    let (frames, bins, hash) = match (frames, bins, hash) {
        (Some(f), Some(b), Some(h)) => (f, b, h),
        _ => return Err(DspError::Format("incomplete header".into())),
    };
    if hash != config.hash() {
        return Err(DspError::Format(format!(
            "spectrogram config hash {hash} does not match {}",
            config.hash()
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != frames * bins * 4 {
        return Err(DspError::Format(format!(
            "payload has {} bytes, header describes {}",
            payload.len(),
            frames * bins * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    MelSpectrogram::new(Tensor::new(frames, bins, data), config.clone())
}

pub fn save_mel(path: &Path, mel: &MelSpectrogram) -> Result<(), DspError> {
    let mut bytes = Vec::new();
    write_mel(&mut bytes, mel)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_mel(path: &Path, config: &FeatureConfig) -> Result<MelSpectrogram, DspError> {
    read_mel(std::fs::File::open(path)?, config)
}
