use super::{Linear, Mask};
use crate::params::Builder;
use crate::{Graph, NnError, Real, Var};

/// Multi-head self-attention with a key padding mask.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub qkv: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, dim: usize, heads: usize) -> Self {
        assert!(dim.is_multiple_of(heads), "dim {dim} not divisible by {heads} heads");
        Self {
            qkv: Linear::new(&mut vb.sub("qkv"), dim, 3 * dim),
            out: Linear::new(&mut vb.sub("out"), dim, dim),
            heads,
            dim,
        }
    }

    pub fn forward<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        x: Var,
        mask: &Mask,
    ) -> Result<Var, NnError> {
        Ok(self.forward_with_weights(g, x, mask)?.0)
    }

    /// Also returns the per-head `len×len` attention matrices.
    pub fn forward_with_weights<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        x: Var,
        mask: &Mask,
    ) -> Result<(Var, Vec<Var>), NnError> {
        mask.check_len(g.shape(x).0)?;
        let dh = self.dim / self.heads;
        let qkv = self.qkv.forward(g, x);
        let bias = (!mask.is_full()).then(|| mask.key_bias(g));
        let scale = R::from_f64_lossy(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let q = g.slice_cols(qkv, h * dh, dh);
            let k = g.slice_cols(qkv, self.dim + h * dh, dh);
            let v = g.slice_cols(qkv, 2 * self.dim + h * dh, dh);
            let s = g.matmul_nt(q, k);
            let mut s = g.scale(s, scale);
            if let Some(b) = bias {
                s = g.add_row(s, b);
            }
            let a = g.softmax_rows(s);
            weights.push(a);
            heads.push(g.matmul(a, v));
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)
        };
        Ok((self.out.forward(g, cat), weights))
    }
}
