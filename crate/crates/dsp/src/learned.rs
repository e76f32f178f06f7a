use std::path::Path;

use serde::{Deserialize, Serialize};
use synthasr_nn::checkpoint::{config_hash, load_checkpoint, save_checkpoint};
use synthasr_nn::layers::{BiLstm, Linear};
use synthasr_nn::train::batch_gradients;
use synthasr_nn::{Builder, Graph, Optimizer, OptimizerConfig, ParamStore, Tensor, Var};

use crate::DspError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedInverterConfig {
    pub hidden: usize,
    pub layers: usize,
    /// Magnitudes are regressed as `ln(max(mag, mag_floor))`.
    pub mag_floor: f64,
}

impl Default for LearnedInverterConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            layers: 2,
            mag_floor: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Meta {
    config: LearnedInverterConfig,
    n_mels: usize,
    bins: usize,
    mean: Vec<f32>,
    std: Vec<f32>,
}

/// BLSTM regression from log-Mel frames to log linear magnitudes.
#[derive(Clone, Debug)]
pub struct LearnedInverter {
    meta: Meta,
    store: ParamStore<f32>,
    lstms: Vec<BiLstm>,
    out: Linear,
}

impl LearnedInverter {
    pub fn new(config: LearnedInverterConfig, n_mels: usize, bins: usize, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = synthasr_nn::rng(seed);
        let mut vb = Builder::new(&mut store, &mut rng);
        let mut lstms = Vec::new();
        let mut dim = n_mels;
        for i in 0..config.layers {
            let l = BiLstm::new(&mut vb.sub(format!("blstm{i}")), dim, config.hidden);
            dim = l.out_dim();
            lstms.push(l);
        }
        let out = Linear::new(&mut vb.sub("out"), dim, bins);
        Self {
            meta: Meta {
                config,
                n_mels,
                bins,
                mean: vec![0.0; n_mels],
                std: vec![1.0; n_mels],
            },
            store,
            lstms,
            out,
        }
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    fn normalize(&self, mel: &Tensor<f32>) -> Tensor<f32> {
        let (mean, std) = (&self.meta.mean, &self.meta.std);
        Tensor::from_fn(mel.rows(), mel.cols(), |r, c| (mel.get(r, c) - mean[c]) / std[c])
    }

    fn forward(&self, g: &mut Graph<'_, f32>, mel: &Tensor<f32>) -> Var {
        let mut h = g.constant(self.normalize(mel));
        for l in &self.lstms {
            h = l.forward(g, h);
        }
        self.out.forward(g, h)
    }

    fn check(&self, mel: &Tensor<f32>) -> Result<(), DspError> {
        if mel.cols() != self.meta.n_mels {
            return Err(DspError::Shape(format!(
                "mel has {} bins, network expects {}",
                mel.cols(),
                self.meta.n_mels
            )));
        }
        Ok(())
    }

    pub fn predict(&self, mel: &Tensor<f32>) -> Result<Tensor<f64>, DspError> {
        self.check(mel)?;
        let mut g = Graph::eval(&self.store);
        let y = self.forward(&mut g, mel);
        let out = g.value(y).cast::<f64>().map(f64::exp);
        if !out.is_finite() {
            return Err(DspError::NonFinite("learned inversion output"));
        }
        Ok(out)
    }

    /// Full-batch Adam on `(mel, magnitude)` pairs; returns the mean L1 loss
    /// per epoch.
    pub fn fit(
        &mut self,
        pairs: &[(Tensor<f32>, Tensor<f64>)],
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> Result<Vec<f64>, DspError> {
        if pairs.is_empty() {
            return Err(DspError::EmptySpectrogram);
        }
        let n = self.meta.n_mels;
        let mut sum = vec![0.0f64; n];
        let mut sq = vec![0.0f64; n];
        let mut count = 0.0;
        for (mel, mag) in pairs {
            self.check(mel)?;
            if mag.rows() != mel.rows() || mag.cols() != self.meta.bins {
                return Err(DspError::Shape("mel and magnitude frames disagree".into()));
            }
            for r in 0..mel.rows() {
                for (c, &v) in mel.row(r).iter().enumerate() {
                    sum[c] += v as f64;
                    sq[c] += (v as f64).powi(2);
                }
            }
            count += mel.rows() as f64;
        }
        for c in 0..n {
            let m = sum[c] / count;
            self.meta.mean[c] = m as f32;
            self.meta.std[c] = (sq[c] / count - m * m).max(1e-6).sqrt() as f32;
        }
        let floor = self.meta.config.mag_floor;
        let targets: Vec<Tensor<f32>> = pairs
            .iter()
            .map(|(_, mag)| mag.map(|v| v.max(floor).ln()).cast())
            .collect();
        let frames: f64 = pairs.iter().map(|(m, _)| (m.rows() * self.meta.bins) as f64).sum();
        let mut opt = Optimizer::new(OptimizerConfig::adam(), &self.store)?;
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let (loss, mut grads) = batch_gradients::<f32, DspError, _>(
                &self.store,
                pairs.len(),
                synthasr_nn::derive_seed(seed, &epoch.to_string()),
                |g, i| {
                    let y = self.forward(g, &pairs[i].0);
                    let t = g.constant(targets[i].clone());
                    let d = g.sub(y, t);
                    let d = g.abs(d);
                    Ok(g.sum(d))
                },
            )?;
            grads.scale((1.0 / frames) as f32);
            grads.clip_global_norm(1.0);
            opt.step(&mut self.store, &grads, lr)?;
            history.push(loss / frames);
        }
        Ok(history)
    }

    pub fn save(&self, path: &Path) -> Result<(), DspError> {
        let extra = serde_json::to_value(&self.meta).map_err(|e| DspError::Format(e.to_string()))?;
        save_checkpoint(path, &self.store, &config_hash(&self.meta.config), 0, extra)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DspError> {
        let (header, store) = load_checkpoint::<f32>(path)?;
        let meta: Meta = serde_json::from_value(header.extra)
            .map_err(|e| DspError::Format(format!("inverter metadata: {e}")))?;
        let mut model = Self::new(meta.config.clone(), meta.n_mels, meta.bins, 0);
        model.store.load_from(&store)?;
        model.meta = meta;
        Ok(model)
    }
}
