use rand::Rng;

use crate::params::{Builder, Init, ParamId};
use crate::{Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZoneoutMode {
    Train,
    Eval,
}

/// Single-direction LSTM; gate order `i, f, g, o`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, in_dim: usize, hidden: usize) -> Self {
        let a = 1.0 / (hidden as f64).sqrt();
        let w_ih = vb.param("w_ih", in_dim, 4 * hidden, Init::Uniform(a));
        let w_hh = vb.param("w_hh", hidden, 4 * hidden, Init::Uniform(a));
        // forget-gate bias starts at 1
        let bias = Tensor::from_fn(1, 4 * hidden, |_, i| {
            if (hidden..2 * hidden).contains(&i) {
                R::one()
            } else {
                R::zero()
            }
        });
        let b = vb.tensor("bias", bias);
        Self {
            w_ih,
            w_hh,
            b,
            in_dim,
            hidden,
        }
    }

    pub fn zero_state<R: Real>(&self, g: &mut Graph<'_, R>) -> LstmState {
        let h = g.constant(Tensor::zeros(1, self.hidden));
        let c = g.constant(Tensor::zeros(1, self.hidden));
        LstmState { h, c }
    }

    /// Input projection for a whole sequence (`len×4H`), computed once.
    pub fn project_inputs<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        let w = g.param(self.w_ih);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    /// One step given the already projected input row (`1×4H`).
    pub fn step_projected<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        x_proj: Var,
        state: LstmState,
    ) -> LstmState {
        let h = self.hidden;
        let w_hh = g.param(self.w_hh);
        let rec = g.matmul(state.h, w_hh);
        let z = g.add(x_proj, rec);
        let i = g.slice_cols(z, 0, h);
        let f = g.slice_cols(z, h, h);
        let gg = g.slice_cols(z, 2 * h, h);
        let o = g.slice_cols(z, 3 * h, h);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let gg = g.tanh(gg);
        let o = g.sigmoid(o);
        let fc = g.mul(f, state.c);
        let ig = g.mul(i, gg);
        let c = g.add(fc, ig);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        LstmState { h, c }
    }

    pub fn step<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, state: LstmState) -> LstmState {
        let p = self.project_inputs(g, x);
        self.step_projected(g, p, state)
    }

    /// Run over all rows of `x`; returns `len×H` hidden states in input order.
    pub fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, reverse: bool) -> Var {
        let len = g.shape(x).0;
        let proj = self.project_inputs(g, x);
        let mut state = self.zero_state(g);
        let mut outs = vec![state.h; len];
        let order: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        for t in order {
            let xt = g.slice_rows(proj, t, 1);
            state = self.step_projected(g, xt, state);
            outs[t] = state.h;
        }
        g.concat_rows(&outs)
    }
}

/// Zoneout on top of a plain LSTM step: in training each hidden and cell unit
/// keeps its previous value with probability `rate`; in evaluation the
/// expectation `rate·prev + (1−rate)·new` is used.
pub fn zoneout_lstm_step<R: Real>(
    g: &mut Graph<'_, R>,
    cell: &Lstm,
    state: LstmState,
    x_proj: Var,
    rate: f64,
    mode: ZoneoutMode,
) -> LstmState {
    assert!((0.0..=1.0).contains(&rate), "zoneout rate must lie in [0, 1]");
    let new = cell.step_projected(g, x_proj, state);
    if rate == 0.0 {
        return new;
    }
    let hidden = cell.hidden;
    let mix = |g: &mut Graph<'_, R>, prev: Var, next: Var| -> Var {
        let keep: Vec<R> = match mode {
            ZoneoutMode::Train => (0..hidden)
                .map(|_| {
                    if g.rng().random::<f64>() < rate {
                        R::one()
                    } else {
                        R::zero()
                    }
                })
                .collect(),
            ZoneoutMode::Eval => vec![R::from_f64_lossy(rate); hidden],
        };
        let fresh: Vec<R> = keep.iter().map(|&k| R::one() - k).collect();
        let m = g.constant(Tensor::new(1, hidden, keep));
        let n = g.constant(Tensor::new(1, hidden, fresh));
        let kept = g.mul(m, prev);
        let updated = g.mul(n, next);
        g.add(kept, updated)
    };
    let h = mix(g, state.h, new.h);
    let c = mix(g, state.c, new.c);
    LstmState { h, c }
}

/// Bidirectional LSTM; output is `[forward | backward]` per row.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, in_dim: usize, hidden: usize) -> Self {
        Self {
            fwd: Lstm::new(&mut vb.sub("fwd"), in_dim, hidden),
            bwd: Lstm::new(&mut vb.sub("bwd"), in_dim, hidden),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        let f = self.fwd.forward(g, x, false);
        let b = self.bwd.forward(g, x, true);
        g.concat_cols(&[f, b])
    }
}
