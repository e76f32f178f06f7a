use std::path::Path;

use serde::{Deserialize, Serialize};
use synthasr_nn::checkpoint::{config_hash, load_checkpoint, save_checkpoint};
use synthasr_nn::layers::{sinusoidal_positions, Conv2d, ConformerBlock, ConformerConfig, Linear, Mask};
use synthasr_nn::{rng, Builder, Graph, ParamStore, Tensor, Var};

use crate::ctc::ctc_loss;
use crate::decode::{beam_search, greedy_decode, BeamConfig, LexiconTrie};
use crate::specaugment::{specaugment, SpecAugmentConfig};
use crate::{AsrError, LmScorer, Vocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrConfig {
    pub n_mels: usize,
    pub vocab: Vocab,
    pub model_dim: usize,
    pub num_blocks: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub conv_kernel: usize,
    pub dropout: f64,
    /// Channels of the strided 2-D convolutions.
    pub frontend_channels: usize,
    /// Power of two; each factor of two is one stride-2 convolution.
    pub subsampling_factor: usize,
    pub specaugment: SpecAugmentConfig,
}

impl AsrConfig {
    /// 12 conformer blocks of width 384 behind a 4x sub-sampling frontend.
    pub fn full(vocab: Vocab) -> Self {
        let c = ConformerConfig::asr(384);
        Self {
            n_mels: 80,
            vocab,
            model_dim: c.dim,
            num_blocks: 12,
            heads: c.heads,
            ffn_mult: c.ffn_mult,
            conv_kernel: c.conv_kernel,
            dropout: c.dropout,
            frontend_channels: 32,
            subsampling_factor: 4,
            specaugment: SpecAugmentConfig::default_asr(),
        }
    }

    pub fn toy(vocab: Vocab, n_mels: usize) -> Self {
        Self {
            n_mels,
            vocab,
            model_dim: 48,
            num_blocks: 2,
            heads: 4,
            ffn_mult: 2,
            conv_kernel: 7,
            dropout: 0.1,
            frontend_channels: 8,
            subsampling_factor: 4,
            specaugment: SpecAugmentConfig::default_asr(),
        }
    }

    pub fn validate(&self) -> Result<(), AsrError> {
        let bad = |m: String| Err(AsrError::Config(m));
        if self.subsampling_factor == 0 || !self.subsampling_factor.is_power_of_two() {
            return bad(format!(
                "subsampling factor {} must be a power of two",
                self.subsampling_factor
            ));
        }
        if self.n_mels == 0 || self.model_dim == 0 || self.heads == 0 {
            return bad("n_mels, model_dim and heads must be positive".into());
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return bad(format!("model_dim {} not divisible by {} heads", self.model_dim, self.heads));
        }
        if self.vocab.len() < 2 {
            return bad("vocabulary needs the blank and at least one symbol".into());
        }
        if self.subsampling_factor > 1 && self.frontend_channels == 0 {
            return bad("frontend needs at least one channel".into());
        }
        if self.conv_kernel.is_multiple_of(2) {
            return bad(format!("conformer kernel {} must be odd", self.conv_kernel));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    fn stages(&self) -> usize {
        self.subsampling_factor.trailing_zeros() as usize
    }

    /// Encoder frames produced from `frames` input frames.
    pub fn encoder_frames(&self, frames: usize) -> usize {
        (0..self.stages()).fold(frames, |t, _| t.div_ceil(2))
    }
}

/// Per-bin standardisation of input features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureNorm {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn fit<'a>(feats: impl IntoIterator<Item = &'a Tensor<f32>>, n: usize) -> Self {
        let mut sum = vec![0.0f64; n];
        let mut sq = vec![0.0f64; n];
        let mut count = 0.0;
        for m in feats {
            for r in 0..m.rows() {
                for (c, &v) in m.row(r).iter().enumerate() {
                    sum[c] += v as f64;
                    sq[c] += (v as f64).powi(2);
                }
            }
            count += m.rows() as f64;
        }
        if count == 0.0 {
            return Self::identity(n);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        Self {
            std: sq
                .iter()
                .zip(&mean)
                .map(|(q, m)| (q / count - m * m).max(1e-4).sqrt() as f32)
                .collect(),
            mean: mean.into_iter().map(|m| m as f32).collect(),
        }
    }

    pub fn apply(&self, x: &Tensor<f32>) -> Tensor<f32> {
        Tensor::from_fn(x.rows(), x.cols(), |r, c| (x.get(r, c) - self.mean[c]) / self.std[c])
    }
}

/// Log-mel features and their marked phoneme ids.
#[derive(Clone, Debug, PartialEq)]
pub struct AsrExample {
    pub features: Tensor<f32>,
    pub labels: Vec<usize>,
}

pub struct AsrModel {
    pub config: AsrConfig,
    pub store: ParamStore<f32>,
    pub norm: FeatureNorm,
    frontend: Vec<Conv2d>,
    input: Linear,
    blocks: Vec<ConformerBlock>,
    output: Linear,
}

#[derive(Serialize, Deserialize)]
struct Extra {
    config: AsrConfig,
    norm: FeatureNorm,
}

impl AsrModel {
    pub fn new(config: AsrConfig, seed: u64) -> Result<Self, AsrError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut r = rng(seed);
        let mut vb = Builder::new(&mut store, &mut r);
        let ch = config.frontend_channels;
        let mut width = config.n_mels;
        let mut frontend = Vec::new();
        for i in 0..config.stages() {
            let cin = if i == 0 { 1 } else { ch };
            frontend.push(Conv2d::new(&mut vb.sub(format!("frontend.{i}")), cin, ch, 3, 2));
            width = width.div_ceil(2);
        }
        let flat = if frontend.is_empty() { config.n_mels } else { width * ch };
        let input = Linear::new(&mut vb.sub("input"), flat, config.model_dim);
        let cc = ConformerConfig {
            dim: config.model_dim,
            heads: config.heads,
            ffn_mult: config.ffn_mult,
            conv_kernel: config.conv_kernel,
            dropout: config.dropout,
        };
        let blocks = (0..config.num_blocks)
            .map(|i| ConformerBlock::new(&mut vb.sub(format!("block.{i}")), &cc))
            .collect();
        let output = Linear::new(&mut vb.sub("output"), config.model_dim, config.vocab.len());
        let norm = FeatureNorm::identity(config.n_mels);
        Ok(Self {
            config,
            store,
            norm,
            frontend,
            input,
            blocks,
            output,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.config.vocab
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    fn check_features(&self, x: &Tensor<f32>) -> Result<(), AsrError> {
        if x.cols() != self.config.n_mels || x.rows() == 0 {
            return Err(AsrError::Shape(format!(
                "features are {}x{}, expected Tx{} with T > 0",
                x.rows(),
                x.cols(),
                self.config.n_mels
            )));
        }
        if !x.is_finite() {
            return Err(AsrError::NonFinite("input features".into()));
        }
        Ok(())
    }

    /// Frame-level log-probabilities of normalized features.
    pub fn forward(&self, g: &mut Graph<'_, f32>, feats: &Tensor<f32>) -> Result<Var, AsrError> {
        self.check_features(feats)?;
        let (frames, mels) = feats.shape();
        let mut x = if self.frontend.is_empty() {
            g.constant(feats.clone())
        } else {
            g.constant(feats.clone().reshape(frames * mels, 1))
        };
        let (mut h, mut w) = (frames, mels);
        for conv in &self.frontend {
            let (y, oh, ow) = conv.forward(g, x, h, w);
            x = g.relu(y);
            h = oh;
            w = ow;
        }
        if !self.frontend.is_empty() {
            x = g.reshape(x, h, w * self.config.frontend_channels);
        }
        let x = self.input.forward(g, x);
        let pos = g.constant(sinusoidal_positions(h, self.config.model_dim));
        let x = g.add(x, pos);
        let mut x = g.dropout(x, self.config.dropout);
        let mask = Mask::all(h);
        for b in &self.blocks {
            x = b.forward(g, x, &mask)?;
        }
        let logits = self.output.forward(g, x);
        Ok(g.log_softmax_rows(logits))
    }

    /// CTC loss of one utterance. `augment` seeds SpecAugment on the
    /// normalized features; `None` disables it.
    pub fn loss(&self, g: &mut Graph<'_, f32>, ex: &AsrExample, augment: Option<u64>) -> Result<Var, AsrError> {
        self.check_features(&ex.features)?;
        let mut feats = self.norm.apply(&ex.features);
        if let Some(seed) = augment {
            feats = specaugment(&feats, &self.config.specaugment, seed);
        }
        let lp = self.forward(g, &feats)?;
        ctc_loss(g, lp, &ex.labels, self.config.vocab.blank())
    }

    /// Inference log-probabilities (`T/s × V`) of raw features.
    pub fn log_probs(&self, features: &Tensor<f32>) -> Result<Tensor<f32>, AsrError> {
        self.check_features(features)?;
        let mut g = Graph::eval(&self.store);
        let lp = self.forward(&mut g, &self.norm.apply(features))?;
        Ok(g.value(lp).clone())
    }

    pub fn greedy(&self, features: &Tensor<f32>) -> Result<Vec<usize>, AsrError> {
        Ok(greedy_decode(&self.log_probs(features)?, self.config.vocab.blank()))
    }

    /// Best lexicon-constrained word sequence.
    pub fn recognize(
        &self,
        features: &Tensor<f32>,
        trie: &LexiconTrie,
        lm: Option<&dyn LmScorer>,
        beam: &BeamConfig,
    ) -> Result<Vec<String>, AsrError> {
        let lp = self.log_probs(features)?;
        let hyps = beam_search(&lp, self.config.vocab.blank(), beam, Some(trie), lm)?;
        Ok(hyps.into_iter().next().map(|h| h.words).unwrap_or_default())
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.config)
    }

    pub fn save(&self, path: &Path, epoch: u64) -> Result<(), AsrError> {
        let extra = serde_json::to_value(Extra {
            config: self.config.clone(),
            norm: self.norm.clone(),
        })
        .map_err(|e| AsrError::Config(e.to_string()))?;
        save_checkpoint(path, &self.store, &self.config_hash(), epoch, extra)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AsrError> {
        let (header, store) = load_checkpoint::<f32>(path)?;
        let extra: Extra = serde_json::from_value(header.extra)
            .map_err(|e| AsrError::Config(format!("checkpoint metadata: {e}")))?;
        if config_hash(&extra.config) != header.config_hash {
            return Err(AsrError::Config("checkpoint config hash mismatch".into()));
        }
        let mut model = Self::new(extra.config, 0)?;
        model.store.load_from(&store)?;
        model.norm = extra.norm;
        Ok(model)
    }
}
