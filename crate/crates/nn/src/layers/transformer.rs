use serde::{Deserialize, Serialize};

use super::{Conv1d, LayerNorm, Mask, MultiHeadAttention};
use crate::params::Builder;
use crate::{Graph, NnError, Real, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub ffn_kernel: usize,
    pub dropout: f64,
}

impl TransformerConfig {
    /// Encoder layer size used by the TTS trunk.
    pub fn tts(dim: usize) -> Self {
        Self {
            dim,
            heads: 2,
            ffn_dim: 4 * dim,
            ffn_kernel: 3,
            dropout: 0.1,
        }
    }
}

/// Self-attention plus convolutional feed-forward, each with a residual
/// connection followed by layer norm.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn_in: Conv1d,
    pub ffn_out: Conv1d,
    pub norm2: LayerNorm,
    pub dropout: f64,
}

impl TransformerBlock {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, cfg: &TransformerConfig) -> Self {
        Self {
            attn: MultiHeadAttention::new(&mut vb.sub("attn"), cfg.dim, cfg.heads),
            norm1: LayerNorm::new(&mut vb.sub("norm1"), cfg.dim),
            ffn_in: Conv1d::new(&mut vb.sub("ffn_in"), cfg.dim, cfg.ffn_dim, cfg.ffn_kernel),
            ffn_out: Conv1d::new(&mut vb.sub("ffn_out"), cfg.ffn_dim, cfg.dim, cfg.ffn_kernel),
            norm2: LayerNorm::new(&mut vb.sub("norm2"), cfg.dim),
            dropout: cfg.dropout,
        }
    }

    pub fn forward<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        x: Var,
        mask: &Mask,
    ) -> Result<Var, NnError> {
        mask.check_len(g.shape(x).0)?;
        let x = mask.apply(g, x);
        let a = self.attn.forward(g, x, mask)?;
        let a = g.dropout(a, self.dropout);
        let y = g.add(x, a);
        let y = self.norm1.forward(g, y);
        let f = self.ffn_in.forward_masked(g, y, mask);
        let f = g.relu(f);
        let f = g.dropout(f, self.dropout);
        let f = self.ffn_out.forward_masked(g, f, mask);
        let f = g.dropout(f, self.dropout);
        let z = g.add(y, f);
        let z = self.norm2.forward(g, z);
        Ok(mask.apply(g, z))
    }
}
