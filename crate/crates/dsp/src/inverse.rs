use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use synthasr_nn::Tensor;

use crate::learned::LearnedInverter;
use crate::{DspError, FeatureConfig, LinearSpectrogram, MelFilterbank, MelSpectrogram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMode {
    PseudoInverse,
    Learned,
}

/// Recovers linear magnitudes from log-Mel frames.
///
/// The pseudo-inverse mode starts from the clamped Moore-Penrose solution and
/// refines it with multiplicative non-negative least-squares updates, all in
/// the power domain.
#[derive(Clone, Debug)]
pub struct MelInverter {
    config: FeatureConfig,
    filterbank: MelFilterbank,
    /// `bins × n_mels`
    pinv: Vec<f64>,
    /// Non-zero filter weights per bin: `(mel index, weight)`.
    by_bin: Vec<Vec<(usize, f64)>>,
    pub nnls_iterations: usize,
    learned: Option<LearnedInverter>,
}

impl MelInverter {
    pub fn new(config: &FeatureConfig) -> Result<Self, DspError> {
        let filterbank = MelFilterbank::new(config)?;
        let (n, b) = (filterbank.n_mels, filterbank.bins);
        let m = DMatrix::from_row_slice(n, b, &filterbank.weights);
        let p = m
            .pseudo_inverse(1e-12)
            .map_err(|e| DspError::Config(format!("filterbank pseudo-inverse: {e}")))?;
        let mut pinv = vec![0.0; b * n];
        for k in 0..b {
            for j in 0..n {
                pinv[k * n + j] = p[(k, j)];
            }
        }
        let by_bin = (0..b)
            .map(|k| {
                (0..n)
                    .filter_map(|j| {
                        let w = filterbank.weights[j * b + k];
                        (w > 0.0).then_some((j, w))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            filterbank,
            pinv,
            by_bin,
            nnls_iterations: 300,
            learned: None,
        })
    }

    pub fn with_learned(mut self, model: LearnedInverter) -> Self {
        self.learned = Some(model);
        self
    }

    pub fn has_learned(&self) -> bool {
        self.learned.is_some()
    }

    pub fn invert(&self, mel: &MelSpectrogram, mode: InversionMode) -> Result<LinearSpectrogram, DspError> {
        if mel.n_mels() != self.filterbank.n_mels {
            return Err(DspError::Shape(format!(
                "mel has {} bins, inverter expects {}",
                mel.n_mels(),
                self.filterbank.n_mels
            )));
        }
        if !mel.frames.is_finite() {
            return Err(DspError::NonFinite("mel spectrogram"));
        }
        match mode {
            InversionMode::PseudoInverse => self.pseudo_inverse(mel),
            InversionMode::Learned => {
                let model = self.learned.as_ref().ok_or(DspError::MissingCheckpoint)?;
                LinearSpectrogram::new(model.predict(&mel.frames)?)
            }
        }
    }

    fn pseudo_inverse(&self, mel: &MelSpectrogram) -> Result<LinearSpectrogram, DspError> {
        let (n, b) = (self.filterbank.n_mels, self.filterbank.bins);
        let floor = self.config.log_floor;
        let mut out = Tensor::zeros(mel.num_frames(), b);
        let mut y = vec![0.0; n];
        for t in 0..mel.num_frames() {
            // energies at the floor carry no information and are taken as zero
            for (yj, &v) in y.iter_mut().zip(mel.frames.row(t)) {
                let p = (v as f64).exp();
                *yj = if p <= floor * (1.0 + 1e-4) { 0.0 } else { p };
            }
            let power = self.invert_power(&y);
            for (o, p) in out.row_mut(t).iter_mut().zip(power) {
                *o = p.sqrt();
            }
        }
        LinearSpectrogram::new(out)
    }

    /// Non-negative `s` with `M s ≈ y` for one frame of mel power `y`.
    pub fn invert_power(&self, y: &[f64]) -> Vec<f64> {
        let (n, b) = (self.filterbank.n_mels, self.filterbank.bins);
        let scale = y.iter().fold(0.0f64, |m, v| m.max(*v));
        if scale == 0.0 {
            return vec![0.0; b];
        }
        let eps = scale * 1e-12;
        let mty: Vec<f64> = self
            .by_bin
            .iter()
            .map(|ws| ws.iter().map(|&(j, w)| w * y[j]).sum())
            .collect();
        let mut s: Vec<f64> = (0..b)
            .map(|k| {
                if self.by_bin[k].is_empty() {
                    return 0.0;
                }
                let v: f64 = (0..n).map(|j| self.pinv[k * n + j] * y[j]).sum();
                v.max(eps)
            })
            .collect();
        let mut ms = vec![0.0; n];
        for _ in 0..self.nnls_iterations {
            ms.iter_mut().for_each(|v| *v = 0.0);
            for (k, ws) in self.by_bin.iter().enumerate() {
                for &(j, w) in ws {
                    ms[j] += w * s[k];
                }
            }
            for (k, ws) in self.by_bin.iter().enumerate() {
                if ws.is_empty() {
                    continue;
                }
                let denom: f64 = ws.iter().map(|&(j, w)| w * ms[j]).sum();
                s[k] *= mty[k] / (denom + eps);
            }
        }
        s
    }
}

/// Convenience wrapper building a fresh inverter per call.
pub fn mel_to_linear(mel: &MelSpectrogram, mode: InversionMode) -> Result<LinearSpectrogram, DspError> {
    MelInverter::new(&mel.config)?.invert(mel, mode)
}
