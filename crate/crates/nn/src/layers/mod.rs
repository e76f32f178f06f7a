//! Neural network layers. Layers only hold [`ParamId`]s; values live in a
//! [`ParamStore`](crate::ParamStore) so one model definition serves both
//! `f32` training and `f64` gradient checks.

mod attention;
mod conformer;
mod lstm;
mod transformer;

pub use attention::MultiHeadAttention;
pub use conformer::{ConformerBlock, ConformerConfig};
pub use lstm::{zoneout_lstm_step, BiLstm, Lstm, LstmState, ZoneoutMode};
pub use transformer::{TransformerBlock, TransformerConfig};

use crate::graph::{Im2Col, Unfold};
use crate::params::{Builder, Init, ParamId};
use crate::{Graph, NnError, Real, Tensor, Var};

/// Valid/padding flags per sequence position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    valid: Vec<bool>,
}

impl Mask {
    pub fn all(len: usize) -> Self {
        Self {
            valid: vec![true; len],
        }
    }

    /// First `valid` positions real, the rest padding.
    pub fn prefix(len: usize, valid: usize) -> Self {
        Self {
            valid: (0..len).map(|i| i < valid).collect(),
        }
    }

    pub fn from_flags(valid: Vec<bool>) -> Self {
        Self { valid }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn is_full(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn check_len(&self, rows: usize) -> Result<(), NnError> {
        if rows != self.valid.len() {
            return Err(NnError::Shape {
                op: "mask",
                detail: format!("mask length {} for {rows} positions", self.valid.len()),
            });
        }
        Ok(())
    }

    /// `len×1` column of ones and zeros.
    pub fn column<R: Real>(&self, g: &mut Graph<'_, R>) -> Var {
        let data = self
            .valid
            .iter()
            .map(|&v| if v { R::one() } else { R::zero() })
            .collect();
        g.constant(Tensor::new(self.valid.len(), 1, data))
    }

    /// `1×len` additive attention bias: 0 for valid keys, a large negative
    /// number for padding.
    pub fn key_bias<R: Real>(&self, g: &mut Graph<'_, R>) -> Var {
        let data = self
            .valid
            .iter()
            .map(|&v| if v { R::zero() } else { R::from_f64_lossy(-1e9) })
            .collect();
        g.constant(Tensor::new(1, self.valid.len(), data))
    }

    /// Zero padded rows of `x`; no-op for an all-valid mask.
    pub fn apply<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        if self.is_full() {
            return x;
        }
        let m = self.column(g);
        g.mul_col(x, m)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, in_dim: usize, out_dim: usize) -> Self {
        Self::with_init(vb, in_dim, out_dim, true, Init::FanIn)
    }

    pub fn with_init<R: Real>(
        vb: &mut Builder<'_, R>,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        let w = vb.param("weight", in_dim, out_dim, init);
        let b = bias.then(|| vb.param("bias", 1, out_dim, Init::Zeros));
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.w).chain(self.b).collect()
    }
}

/// Convolution over the row (time) axis with `same` or strided padding.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv1d {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self::with_opts(vb, in_ch, out_ch, kernel, 1, 1, Init::FanIn)
    }

    pub fn with_opts<R: Real>(
        vb: &mut Builder<'_, R>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        stride: usize,
        init: Init,
    ) -> Self {
        Self {
            w: vb.param("weight", kernel * in_ch, out_ch, init),
            b: vb.param("bias", 1, out_ch, Init::Zeros),
            kernel,
            dilation,
            stride,
            in_ch,
            out_ch,
        }
    }

    fn unfold(&self) -> Unfold {
        let mut u = Unfold::same(self.kernel, self.dilation);
        u.stride = self.stride;
        u
    }

    /// Output length for an input of `len` rows (`ceil(len/stride)`).
    pub fn out_len(&self, len: usize) -> usize {
        self.unfold().out_len(len)
    }

    pub fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        let cols = g.unfold1d(x, self.unfold());
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(cols, w);
        g.add_row(y, b)
    }

    /// Padding rows are zeroed before the convolution so they cannot leak
    /// into valid neighbours.
    pub fn forward_masked<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, mask: &Mask) -> Var {
        let x = mask.apply(g, x);
        self.forward(g, x)
    }
}

/// 2-D convolution over channels-last `(h·w)×c` maps.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub stride: usize,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv2d {
    pub fn new<R: Real>(
        vb: &mut Builder<'_, R>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self::with_init(vb, in_ch, out_ch, kernel, stride, Init::FanIn)
    }

    pub fn with_init<R: Real>(
        vb: &mut Builder<'_, R>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        init: Init,
    ) -> Self {
        Self {
            w: vb.param("weight", kernel * kernel * in_ch, out_ch, init),
            b: vb.param("bias", 1, out_ch, Init::Zeros),
            kernel,
            stride,
            in_ch,
            out_ch,
        }
    }

    /// Returns the output and its spatial size.
    pub fn forward<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        x: Var,
        height: usize,
        width: usize,
    ) -> (Var, usize, usize) {
        let p = Im2Col {
            height,
            width,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.kernel / 2,
        };
        let (oh, ow) = p.out_dims();
        let cols = g.im2col2d(x, p);
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(cols, w);
        (g.add_row(y, b), oh, ow)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, dim: usize) -> Self {
        Self {
            gamma: vb.param("gamma", 1, dim, Init::Ones),
            beta: vb.param("beta", 1, dim, Init::Zeros),
            eps: 1e-5,
        }
    }

    pub fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        let n = g.layer_norm_rows(x, self.eps);
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        let y = g.mul_row(n, gamma);
        g.add_row(y, beta)
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub num: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, num: usize, dim: usize) -> Self {
        Self {
            table: vb.param("table", num, dim, Init::Normal((dim as f64).powf(-0.5))),
            num,
            dim,
        }
    }

    pub fn forward<R: Real>(&self, g: &mut Graph<'_, R>, ids: &[usize]) -> Result<Var, NnError> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.num) {
            return Err(NnError::Shape {
                op: "embedding",
                detail: format!("id {bad} outside table of {}", self.num),
            });
        }
        let t = g.param(self.table);
        Ok(g.gather_rows(t, ids))
    }
}

/// Sinusoidal position table (`len×dim`).
pub fn sinusoidal_positions<R: Real>(len: usize, dim: usize) -> Tensor<R> {
    Tensor::from_fn(len, dim, |pos, i| {
        let k = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * k / dim as f64);
        R::from_f64_lossy(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}
