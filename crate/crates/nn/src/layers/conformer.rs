use serde::{Deserialize, Serialize};

use super::{LayerNorm, Linear, Mask, MultiHeadAttention};
use crate::params::{Builder, Init, ParamId};
use crate::{Graph, NnError, Real, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformerConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub conv_kernel: usize,
    pub dropout: f64,
}

impl ConformerConfig {
    pub fn asr(dim: usize) -> Self {
        Self {
            dim,
            heads: 6,
            ffn_mult: 4,
            conv_kernel: 31,
            dropout: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
struct FeedForward {
    norm: LayerNorm,
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn new<R: Real>(vb: &mut Builder<'_, R>, dim: usize, mult: usize) -> Self {
        Self {
            norm: LayerNorm::new(&mut vb.sub("norm"), dim),
            up: Linear::new(&mut vb.sub("up"), dim, mult * dim),
            down: Linear::new(&mut vb.sub("down"), mult * dim, dim),
        }
    }

    fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, dropout: f64) -> Var {
        let h = self.norm.forward(g, x);
        let h = self.up.forward(g, h);
        let h = g.silu(h);
        let h = g.dropout(h, dropout);
        let h = self.down.forward(g, h);
        g.dropout(h, dropout)
    }
}

#[derive(Clone, Debug)]
struct ConvModule {
    norm: LayerNorm,
    pointwise_in: Linear,
    depthwise: ParamId,
    depthwise_bias: ParamId,
    mid_norm: LayerNorm,
    pointwise_out: Linear,
    kernel: usize,
}

impl ConvModule {
    fn new<R: Real>(vb: &mut Builder<'_, R>, dim: usize, kernel: usize) -> Self {
        Self {
            norm: LayerNorm::new(&mut vb.sub("norm"), dim),
            pointwise_in: Linear::new(&mut vb.sub("pw_in"), dim, 2 * dim),
            depthwise: vb.param(
                "dw_weight",
                kernel,
                dim,
                Init::Uniform(1.0 / (kernel as f64).sqrt()),
            ),
            depthwise_bias: vb.param("dw_bias", 1, dim, Init::Zeros),
            mid_norm: LayerNorm::new(&mut vb.sub("mid_norm"), dim),
            pointwise_out: Linear::new(&mut vb.sub("pw_out"), dim, dim),
            kernel,
        }
    }

    fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, mask: &Mask, dropout: f64) -> Var {
        let dim = g.shape(x).1;
        let h = self.norm.forward(g, x);
        let h = self.pointwise_in.forward(g, h);
        // GLU
        let a = g.slice_cols(h, 0, dim);
        let b = g.slice_cols(h, dim, dim);
        let b = g.sigmoid(b);
        let h = g.mul(a, b);
        let h = mask.apply(g, h);
        let w = g.param(self.depthwise);
        let h = g.depthwise_conv1d(h, w, (self.kernel - 1) / 2);
        let bias = g.param(self.depthwise_bias);
        let h = g.add_row(h, bias);
        // layer norm stands in for batch norm: batch statistics would make
        // per-utterance outputs depend on the batch
        let h = self.mid_norm.forward(g, h);
        let h = g.silu(h);
        let h = self.pointwise_out.forward(g, h);
        g.dropout(h, dropout)
    }
}

/// Macaron feed-forward halves around self-attention and a convolution
/// module, closed by a final layer norm.
#[derive(Clone, Debug)]
pub struct ConformerBlock {
    ff1: FeedForward,
    attn_norm: LayerNorm,
    attn: MultiHeadAttention,
    conv: ConvModule,
    ff2: FeedForward,
    final_norm: LayerNorm,
    dropout: f64,
}

impl ConformerBlock {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, cfg: &ConformerConfig) -> Self {
        Self {
            ff1: FeedForward::new(&mut vb.sub("ff1"), cfg.dim, cfg.ffn_mult),
            attn_norm: LayerNorm::new(&mut vb.sub("attn_norm"), cfg.dim),
            attn: MultiHeadAttention::new(&mut vb.sub("attn"), cfg.dim, cfg.heads),
            conv: ConvModule::new(&mut vb.sub("conv"), cfg.dim, cfg.conv_kernel),
            ff2: FeedForward::new(&mut vb.sub("ff2"), cfg.dim, cfg.ffn_mult),
            final_norm: LayerNorm::new(&mut vb.sub("final_norm"), cfg.dim),
            dropout: cfg.dropout,
        }
    }

    /// Output projections of every residual branch. Zeroing them turns the
    /// block into `final_norm(x)`.
    pub fn residual_outputs(&self) -> Vec<ParamId> {
        [&self.ff1.down, &self.attn.out, &self.conv.pointwise_out, &self.ff2.down]
            .into_iter()
            .flat_map(Linear::params)
            .collect()
    }

    pub fn forward<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        x: Var,
        mask: &Mask,
    ) -> Result<Var, NnError> {
        mask.check_len(g.shape(x).0)?;
        let half = R::from_f64_lossy(0.5);
        let f = self.ff1.forward(g, x, self.dropout);
        let f = g.scale(f, half);
        let x = g.add(x, f);
        let h = self.attn_norm.forward(g, x);
        let a = self.attn.forward(g, h, mask)?;
        let a = g.dropout(a, self.dropout);
        let x = g.add(x, a);
        let c = self.conv.forward(g, x, mask, self.dropout);
        let x = g.add(x, c);
        let f = self.ff2.forward(g, x, self.dropout);
        let f = g.scale(f, half);
        let x = g.add(x, f);
        let y = self.final_norm.forward(g, x);
        Ok(mask.apply(g, y))
    }
}
