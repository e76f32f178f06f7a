use std::io::BufWriter;
use std::path::Path;

use synthasr_nn::Tensor;

use crate::PipelineError;

/// Decibel value mapped to white.
pub const DB_TOP: f32 = 20.0;
/// Decibel value mapped to black.
pub const DB_BOTTOM: f32 = -80.0;

/// Gray level of a natural-log power value under the fixed dB mapping.
pub fn gray_level(log_power: f32) -> u8 {
    let db = 10.0 * std::f32::consts::LOG10_E * log_power;
    let x = ((db - DB_BOTTOM) / (DB_TOP - DB_BOTTOM)).clamp(0.0, 1.0);
    (x * 255.0).round() as u8
}

/// Pixels of a `T × n_mels` log-Mel matrix: time runs left to right and
/// the lowest mel bin is the bottom row.
pub fn spectrogram_pixels(frames: &Tensor<f32>) -> (u32, u32, Vec<u8>) {
    let (t, n) = frames.shape();
    let mut px = vec![0u8; t * n];
    for (i, row) in (0..t).map(|i| (i, frames.row(i))) {
        for (j, &v) in row.iter().enumerate() {
            px[(n - 1 - j) * t + i] = gray_level(v);
        }
    }
    (t as u32, n as u32, px)
}

pub fn write_spectrogram_png(path: &Path, frames: &Tensor<f32>) -> Result<(), PipelineError> {
    let (w, h, px) = spectrogram_pixels(frames);
    if w == 0 || h == 0 {
        return Err(PipelineError::Failed("cannot draw an empty spectrogram".into()));
    }
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| PipelineError::Failed(format!("png: {e}")))?;
    writer
        .write_image_data(&px)
        .map_err(|e| PipelineError::Failed(format!("png: {e}")))?;
    writer.finish().map_err(|e| PipelineError::Failed(format!("png: {e}")))?;
    Ok(())
}
