use synthasr_nn::layers::{
    sinusoidal_positions, BiLstm, Conv1d, Linear, Mask, TransformerBlock, TransformerConfig,
};
use synthasr_nn::{Builder, Graph, Tensor, Var};

use crate::trunk::broadcast_rows;
use crate::{PostnetConfig, TtsError};

/// Mean absolute difference over rows flagged valid in `mask`.
pub(crate) fn masked_l1(g: &mut Graph<'_, f32>, pred: Var, target: &Tensor<f32>, mask: &Mask) -> Result<Var, TtsError> {
    if g.shape(pred) != target.shape() {
        return Err(TtsError::Shape(format!(
            "prediction {:?} vs target {:?}",
            g.shape(pred),
            target.shape()
        )));
    }
    let t = g.constant(target.clone());
    let d = g.sub(pred, t);
    let d = g.abs(d);
    let d = mask.apply(g, d);
    let s = g.sum(d);
    let count = (mask.count_valid() * target.cols()).max(1);
    Ok(g.scale(s, 1.0 / count as f32))
}

/// `[h_t | spk]` for every frame.
pub(crate) fn with_speaker(g: &mut Graph<'_, f32>, h_t: Var, spk: Var) -> Var {
    let t = g.shape(h_t).0;
    let s = broadcast_rows(g, spk, t);
    g.concat_cols(&[h_t, s])
}

/// Residual convolutional refinement (tanh between layers).
#[derive(Clone, Debug)]
pub struct Postnet {
    convs: Vec<Conv1d>,
    dropout: f64,
}

impl Postnet {
    pub fn new(vb: &mut Builder<'_, f32>, cfg: &PostnetConfig, n_mels: usize) -> Self {
        let mut convs = Vec::new();
        let mut cin = n_mels;
        for i in 0..cfg.layers {
            let cout = if i + 1 == cfg.layers { n_mels } else { cfg.channels };
            convs.push(Conv1d::new(&mut vb.sub(format!("conv{i}")), cin, cout, cfg.kernel));
            cin = cout;
        }
        Self {
            convs,
            dropout: cfg.dropout,
        }
    }

    /// `x + postnet(x)`.
    pub fn refine(&self, g: &mut Graph<'_, f32>, x: Var) -> Var {
        let mut y = x;
        let last = self.convs.len().saturating_sub(1);
        for (i, c) in self.convs.iter().enumerate() {
            y = c.forward(g, y);
            if i < last {
                y = g.tanh(y);
            }
            y = g.dropout(y, self.dropout);
        }
        if self.convs.is_empty() {
            x
        } else {
            g.add(x, y)
        }
    }
}

/// Transformer stack over the up-sampled states.
#[derive(Clone, Debug)]
pub struct TransformerDecoder {
    proj_in: Linear,
    blocks: Vec<TransformerBlock>,
    proj_out: Linear,
    dim: usize,
}

impl TransformerDecoder {
    pub fn new(
        vb: &mut Builder<'_, f32>,
        in_dim: usize,
        dim: usize,
        cfg: &TransformerConfig,
        layers: usize,
        n_mels: usize,
    ) -> Self {
        Self {
            proj_in: Linear::new(&mut vb.sub("proj_in"), in_dim, dim),
            blocks: (0..layers)
                .map(|i| TransformerBlock::new(&mut vb.sub(format!("block{i}")), cfg))
                .collect(),
            proj_out: Linear::new(&mut vb.sub("proj_out"), dim, n_mels),
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var) -> Result<Var, TtsError> {
        let t = g.shape(h_t).0;
        let x = with_speaker(g, h_t, spk);
        let x = self.proj_in.forward(g, x);
        let pos = g.constant(sinusoidal_positions(t, self.dim));
        let mut x = g.add(x, pos);
        let mask = Mask::all(t);
        for b in &self.blocks {
            x = b.forward(g, x, &mask)?;
        }
        Ok(self.proj_out.forward(g, x))
    }

    pub fn loss(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var, target: &Tensor<f32>) -> Result<Var, TtsError> {
        let y = self.forward(g, h_t, spk)?;
        masked_l1(g, y, target, &Mask::all(target.rows()))
    }
}

/// Bidirectional LSTM stack plus postnet.
#[derive(Clone, Debug)]
pub struct NarLstmDecoder {
    layers: Vec<BiLstm>,
    dropout: f64,
    out: Linear,
    postnet: Postnet,
}

impl NarLstmDecoder {
    pub fn new(
        vb: &mut Builder<'_, f32>,
        in_dim: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        postnet: &PostnetConfig,
        n_mels: usize,
    ) -> Self {
        let mut dim = in_dim;
        let mut stack = Vec::new();
        for i in 0..layers {
            let l = BiLstm::new(&mut vb.sub(format!("blstm{i}")), dim, hidden);
            dim = l.out_dim();
            stack.push(l);
        }
        Self {
            layers: stack,
            dropout,
            out: Linear::new(&mut vb.sub("out"), dim, n_mels),
            postnet: Postnet::new(&mut vb.sub("postnet"), postnet, n_mels),
        }
    }

    /// Decoder output before and after the postnet.
    pub fn forward(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var) -> (Var, Var) {
        let mut x = with_speaker(g, h_t, spk);
        for l in &self.layers {
            x = l.forward(g, x);
            x = g.dropout(x, self.dropout);
        }
        let dec = self.out.forward(g, x);
        let refined = self.postnet.refine(g, dec);
        (dec, refined)
    }

    pub fn loss(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var, target: &Tensor<f32>) -> Result<Var, TtsError> {
        let (dec, refined) = self.forward(g, h_t, spk);
        let mask = Mask::all(target.rows());
        let a = masked_l1(g, dec, target, &mask)?;
        let b = masked_l1(g, refined, target, &mask)?;
        Ok(g.add(a, b))
    }
}
