use synthasr_nn::layers::{
    sinusoidal_positions, Conv1d, Embedding, LayerNorm, Linear, Mask, TransformerBlock,
    TransformerConfig,
};
use synthasr_nn::{Builder, Graph, Init, Var};

use crate::{TrunkConfig, TtsError};

/// Phoneme ids of one utterance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhonemeSequence {
    pub ids: Vec<usize>,
}

impl PhonemeSequence {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self, TtsError> {
        if ids.is_empty() {
            return Err(TtsError::EmptySequence);
        }
        if let Some(&id) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(TtsError::UnknownPhoneme {
                id,
                size: vocab_size,
            });
        }
        Ok(Self { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug)]
struct ConvNorm {
    conv: Conv1d,
    norm: LayerNorm,
}

impl ConvNorm {
    fn new(vb: &mut Builder<'_, f32>, cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            conv: Conv1d::new(&mut vb.sub("conv"), cin, cout, kernel),
            norm: LayerNorm::new(&mut vb.sub("norm"), cout),
        }
    }

    fn forward(&self, g: &mut Graph<'_, f32>, x: Var, mask: &Mask, dropout: f64) -> Var {
        let y = self.conv.forward_masked(g, x, mask);
        let y = g.relu(y);
        let y = self.norm.forward(g, y);
        g.dropout(y, dropout)
    }
}

/// Prenet, Transformer encoder, speaker table and duration predictor.
#[derive(Clone, Debug)]
pub struct Trunk {
    pub config: TrunkConfig,
    embed: Embedding,
    prenet: Vec<ConvNorm>,
    blocks: Vec<TransformerBlock>,
    speakers: Embedding,
    duration: Vec<ConvNorm>,
    duration_out: Linear,
}

impl Trunk {
    pub fn new(vb: &mut Builder<'_, f32>, config: &TrunkConfig) -> Self {
        let d = config.dim;
        let embed = Embedding::new(&mut vb.sub("embed"), config.vocab_size, d);
        let prenet = (0..config.prenet_layers)
            .map(|i| ConvNorm::new(&mut vb.sub(format!("prenet{i}")), d, d, config.prenet_kernel))
            .collect();
        let tcfg = TransformerConfig {
            dim: d,
            heads: config.heads,
            ffn_dim: config.ffn_dim,
            ffn_kernel: config.ffn_kernel,
            dropout: config.dropout,
        };
        let blocks = (0..config.layers)
            .map(|i| TransformerBlock::new(&mut vb.sub(format!("encoder{i}")), &tcfg))
            .collect();
        let speakers = Embedding::new(&mut vb.sub("speakers"), config.num_speakers, config.speaker_dim);
        let mut duration = Vec::new();
        let mut cin = d + config.speaker_dim;
        for i in 0..2 {
            duration.push(ConvNorm::new(
                &mut vb.sub(format!("duration{i}")),
                cin,
                config.duration_channels,
                config.duration_kernel,
            ));
            cin = config.duration_channels;
        }
        let mut out_vb = vb.sub("duration_out");
        let duration_out = Linear::with_init(&mut out_vb, cin, 1, false, Init::FanIn);
        let bias = out_vb.param("bias", 1, 1, Init::Const(config.duration_bias));
        let duration_out = Linear {
            b: Some(bias),
            ..duration_out
        };
        Self {
            config: config.clone(),
            embed,
            prenet,
            blocks,
            speakers,
            duration,
            duration_out,
        }
    }

    /// Encoder states `h_n` (`N × dim`). Rows where `mask` is false are
    /// padding and never influence valid rows.
    pub fn encode(&self, g: &mut Graph<'_, f32>, ids: &[usize], mask: &Mask) -> Result<Var, TtsError> {
        if ids.is_empty() {
            return Err(TtsError::EmptySequence);
        }
        if let Some(&id) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(TtsError::UnknownPhoneme {
                id,
                size: self.config.vocab_size,
            });
        }
        mask.check_len(ids.len())?;
        let n = ids.len();
        let d = self.config.dim;
        let x = self.embed.forward(g, ids)?;
        let mut x = g.scale(x, (d as f32).sqrt());
        for layer in &self.prenet {
            let y = layer.forward(g, x, mask, self.config.dropout);
            x = g.add(x, y);
        }
        let pos = g.constant(sinusoidal_positions(n, d));
        let mut x = g.add(x, pos);
        x = mask.apply(g, x);
        for block in &self.blocks {
            x = block.forward(g, x, mask)?;
        }
        Ok(x)
    }

    /// Encode several utterances padded to a common length; returns the
    /// valid rows of each.
    pub fn encode_batch(&self, g: &mut Graph<'_, f32>, batch: &[&[usize]]) -> Result<Vec<Var>, TtsError> {
        let longest = batch.iter().map(|b| b.len()).max().unwrap_or(0);
        let mut out = Vec::with_capacity(batch.len());
        for ids in batch {
            if ids.is_empty() {
                return Err(TtsError::EmptySequence);
            }
            let mut padded = ids.to_vec();
            padded.resize(longest, 0);
            let mask = Mask::prefix(longest, ids.len());
            let h = self.encode(g, &padded, &mask)?;
            out.push(g.slice_rows(h, 0, ids.len()));
        }
        Ok(out)
    }

    /// Speaker embedding row (`1 × speaker_dim`).
    pub fn speaker(&self, g: &mut Graph<'_, f32>, speaker: usize) -> Result<Var, TtsError> {
        if speaker >= self.config.num_speakers {
            return Err(TtsError::UnknownSpeaker {
                id: speaker,
                size: self.config.num_speakers,
            });
        }
        Ok(self.speakers.forward(g, &[speaker])?)
    }

    /// Predicted `log(d + 1)` per phoneme (`N × 1`). The encoder states are
    /// detached, so this head never trains the encoder.
    pub fn predict_log_durations(&self, g: &mut Graph<'_, f32>, h: Var, spk: Var, mask: &Mask) -> Var {
        let n = g.shape(h).0;
        let h = g.detach(h);
        let s = broadcast_rows(g, spk, n);
        let mut x = g.concat_cols(&[h, s]);
        for layer in &self.duration {
            x = layer.forward(g, x, mask, self.config.dropout);
        }
        let y = self.duration_out.forward(g, x);
        mask.apply(g, y)
    }
}

/// Repeat a `1 × c` row `n` times.
pub fn broadcast_rows(g: &mut Graph<'_, f32>, row: Var, n: usize) -> Var {
    g.gather_rows(row, &vec![0; n])
}

/// Mean L1 distance between predicted and reference `log(d + 1)` over valid
/// phonemes.
pub fn duration_loss(g: &mut Graph<'_, f32>, predicted: Var, durations: &[u32], mask: &Mask) -> Result<Var, TtsError> {
    let n = g.shape(predicted).0;
    if durations.len() != n {
        return Err(TtsError::Shape(format!(
            "{} durations for {n} phonemes",
            durations.len()
        )));
    }
    let target = synthasr_nn::Tensor::new(n, 1, durations.iter().map(|&d| (d as f32 + 1.0).ln()).collect());
    let t = g.constant(target);
    let diff = g.sub(predicted, t);
    let diff = g.abs(diff);
    let diff = mask.apply(g, diff);
    let s = g.sum(diff);
    Ok(g.scale(s, 1.0 / mask.count_valid().max(1) as f32))
}
