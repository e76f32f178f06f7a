use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use synthasr_nn::layers::{Conv1d, Linear};
use synthasr_nn::{Builder, Graph, Init, ParamId, Real, Tensor, Var};

use crate::TtsError;

/// Per-channel affine map `y = x·exp(logs) + b`.
#[derive(Clone, Debug)]
struct ActNorm {
    logs: ParamId,
    bias: ParamId,
}

impl ActNorm {
    fn new<R: Real>(vb: &mut Builder<'_, R>, channels: usize) -> Self {
        Self {
            logs: vb.param("logs", 1, channels, Init::Zeros),
            bias: vb.param("bias", 1, channels, Init::Zeros),
        }
    }

    fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, rows: usize) -> (Var, Var) {
        let logs = g.param(self.logs);
        let scale = g.exp(logs);
        let y = g.mul_row(x, scale);
        let b = g.param(self.bias);
        let y = g.add_row(y, b);
        let ld = g.sum(logs);
        (y, g.scale(ld, R::from_f64_lossy(rows as f64)))
    }

    fn inverse<R: Real>(&self, g: &mut Graph<'_, R>, y: Var) -> Var {
        let b = g.param(self.bias);
        let nb = g.neg(b);
        let x = g.add_row(y, nb);
        let logs = g.param(self.logs);
        let nl = g.neg(logs);
        let s = g.exp(nl);
        g.mul_row(x, s)
    }
}

/// Invertible channel mixing `y = x·W` with `W = P·L·U`, `L` unit lower
/// triangular, `U` upper triangular with diagonal `exp(log_s)`.
#[derive(Clone, Debug)]
struct InvConv {
    lower: ParamId,
    upper: ParamId,
    log_s: ParamId,
    reverse: bool,
    channels: usize,
}

impl InvConv {
    fn new<R: Real>(vb: &mut Builder<'_, R>, channels: usize, reverse: bool) -> Self {
        Self {
            lower: vb.param("lower", channels, channels, Init::Zeros),
            upper: vb.param("upper", channels, channels, Init::Zeros),
            log_s: vb.param("log_s", 1, channels, Init::Zeros),
            reverse,
            channels,
        }
    }

    fn weight<R: Real>(&self, g: &mut Graph<'_, R>) -> Var {
        let c = self.channels;
        let lower_mask = Tensor::from_fn(c, c, |i, j| if j < i { R::one() } else { R::zero() });
        let upper_mask = Tensor::from_fn(c, c, |i, j| if j > i { R::one() } else { R::zero() });
        let eye = Tensor::from_fn(c, c, |i, j| if i == j { R::one() } else { R::zero() });
        let perm = Tensor::from_fn(c, c, |i, j| {
            let k = if self.reverse { c - 1 - i } else { i };
            if j == k {
                R::one()
            } else {
                R::zero()
            }
        });
        let lm = g.constant(lower_mask);
        let um = g.constant(upper_mask);
        let eye = g.constant(eye);
        let perm = g.constant(perm);
        let l = g.param(self.lower);
        let l = g.mul(l, lm);
        let l = g.add(l, eye);
        let u = g.param(self.upper);
        let u = g.mul(u, um);
        let ls = g.param(self.log_s);
        let s = g.exp(ls);
        let diag = g.mul_row(eye, s);
        let u = g.add(u, diag);
        let lu = g.matmul(l, u);
        g.matmul(perm, lu)
    }

    fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, rows: usize) -> (Var, Var) {
        let w = self.weight(g);
        let y = g.matmul(x, w);
        let ls = g.param(self.log_s);
        let ld = g.sum(ls);
        (y, g.scale(ld, R::from_f64_lossy(rows as f64)))
    }

    fn inverse<R: Real>(&self, g: &mut Graph<'_, R>, y: Var) -> Result<Var, TtsError> {
        let w = self.weight(g);
        let wt = g.value(w);
        let c = self.channels;
        let m = DMatrix::from_fn(c, c, |i, j| wt.get(i, j).as_f64());
        let inv = m
            .try_inverse()
            .ok_or_else(|| TtsError::NonFinite("singular flow mixing matrix".into()))?;
        let inv = g.constant(Tensor::from_fn(c, c, |i, j| R::from_f64_lossy(inv[(i, j)])));
        Ok(g.matmul(y, inv))
    }
}

/// Non-causal WaveNet with gated activations and a global condition.
#[derive(Clone, Debug)]
struct WaveNet {
    start: Linear,
    dilated: Vec<Conv1d>,
    cond: Vec<Linear>,
    res_skip: Vec<Linear>,
    end: Linear,
    hidden: usize,
    dropout: f64,
}

impl WaveNet {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Real>(
        vb: &mut Builder<'_, R>,
        in_dim: usize,
        out_dim: usize,
        cond_dim: usize,
        hidden: usize,
        layers: usize,
        kernel: usize,
        dilation_rate: usize,
        dropout: f64,
    ) -> Self {
        let mut dilated = Vec::new();
        let mut cond = Vec::new();
        let mut res_skip = Vec::new();
        for i in 0..layers {
            let d = dilation_rate.max(1).pow(i as u32);
            dilated.push(Conv1d::with_opts(
                &mut vb.sub(format!("in{i}")),
                hidden,
                2 * hidden,
                kernel,
                d,
                1,
                Init::FanIn,
            ));
            cond.push(Linear::new(&mut vb.sub(format!("cond{i}")), cond_dim, 2 * hidden));
            let out = if i + 1 == layers { hidden } else { 2 * hidden };
            res_skip.push(Linear::new(&mut vb.sub(format!("res_skip{i}")), hidden, out));
        }
        Self {
            start: Linear::new(&mut vb.sub("start"), in_dim, hidden),
            dilated,
            cond,
            res_skip,
            end: Linear::with_init(&mut vb.sub("end"), hidden, out_dim, true, Init::Zeros),
            hidden,
            dropout,
        }
    }

    fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, cond: Var) -> Var {
        let h = self.hidden;
        let mut x = self.start.forward(g, x);
        let mut skip: Option<Var> = None;
        let last = self.dilated.len().saturating_sub(1);
        for (i, conv) in self.dilated.iter().enumerate() {
            let a = conv.forward(g, x);
            let c = self.cond[i].forward(g, cond);
            let a = g.add_row(a, c);
            let t = g.slice_cols(a, 0, h);
            let t = g.tanh(t);
            let s = g.slice_cols(a, h, h);
            let s = g.sigmoid(s);
            let act = g.mul(t, s);
            let act = g.dropout(act, self.dropout);
            let rs = self.res_skip[i].forward(g, act);
            let sk = if i < last {
                let res = g.slice_cols(rs, 0, h);
                x = g.add(x, res);
                g.slice_cols(rs, h, h)
            } else {
                rs
            };
            skip = Some(match skip {
                Some(acc) => g.add(acc, sk),
                None => sk,
            });
        }
        let out = skip.unwrap_or(x);
        self.end.forward(g, out)
    }
}

/// Affine coupling: the second half of the channels is scaled and shifted
/// by a WaveNet of the first half.
#[derive(Clone, Debug)]
struct Coupling {
    net: WaveNet,
    half: usize,
}

impl Coupling {
    fn split<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> (Var, Var) {
        let c = g.shape(x).1;
        (g.slice_cols(x, 0, self.half), g.slice_cols(x, self.half, c - self.half))
    }

    fn shift_scale<R: Real>(&self, g: &mut Graph<'_, R>, xa: Var, cond: Var) -> (Var, Var) {
        let out = self.net.forward(g, xa, cond);
        let c = g.shape(out).1 / 2;
        (g.slice_cols(out, 0, c), g.slice_cols(out, c, c))
    }

    fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, cond: Var, rows: usize) -> (Var, Var) {
        let (xa, xb) = self.split(g, x);
        let (m, logs) = self.shift_scale(g, xa, cond);
        let s = g.exp(logs);
        let yb = g.mul(xb, s);
        let yb = g.add(yb, m);
        let y = g.concat_cols(&[xa, yb]);
        let counted = if rows < g.shape(logs).0 {
            g.slice_rows(logs, 0, rows)
        } else {
            logs
        };
        (y, g.sum(counted))
    }

    fn inverse<R: Real>(&self, g: &mut Graph<'_, R>, y: Var, cond: Var) -> Var {
        let (ya, yb) = self.split(g, y);
        let (m, logs) = self.shift_scale(g, ya, cond);
        let xb = g.sub(yb, m);
        let nl = g.neg(logs);
        let s = g.exp(nl);
        let xb = g.mul(xb, s);
        g.concat_cols(&[ya, xb])
    }
}

#[derive(Clone, Debug)]
struct FlowBlock {
    actnorm: ActNorm,
    invconv: InvConv,
    coupling: Coupling,
}

/// Shape options of [`FlowDecoder`].
#[derive(Clone, Debug)]
pub struct FlowParams {
    pub n_mels: usize,
    pub cond_dim: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub wn_layers: usize,
    pub kernel: usize,
    pub dilation_rate: usize,
    pub dropout: f64,
    /// Use identity channel permutations in every block instead of
    /// alternating reversals.
    pub identity_permutation: bool,
}

/// Invertible decoder mapping mel frames to a Gaussian latent; frames are
/// squeezed in pairs so the flow sees `T/2 × 2·n_mels`.
#[derive(Clone, Debug)]
pub struct FlowDecoder {
    blocks: Vec<FlowBlock>,
    n_mels: usize,
}

/// Result of the forward (mel to latent) pass.
pub struct FlowOutput {
    /// Squeezed latent of shape `ceil(T/2) × 2·n_mels`.
    pub z: Var,
    /// Total log-determinant (`1 × 1`).
    pub logdet: Var,
}

impl FlowDecoder {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, p: &FlowParams) -> Self {
        let c = 2 * p.n_mels;
        let half = c / 2;
        let blocks = (0..p.blocks)
            .map(|i| {
                let mut b = vb.sub(format!("block{i}"));
                FlowBlock {
                    actnorm: ActNorm::new(&mut b.sub("actnorm"), c),
                    invconv: InvConv::new(
                        &mut b.sub("invconv"),
                        c,
                        !p.identity_permutation && i % 2 == 1,
                    ),
                    coupling: Coupling {
                        net: WaveNet::new(
                            &mut b.sub("wavenet"),
                            half,
                            2 * (c - half),
                            p.cond_dim,
                            p.hidden,
                            p.wn_layers,
                            p.kernel,
                            p.dilation_rate,
                            p.dropout,
                        ),
                        half,
                    },
                }
            })
            .collect();
        Self {
            blocks,
            n_mels: p.n_mels,
        }
    }

    /// Rows after pairing frames; odd lengths repeat the last frame.
    pub fn squeezed_len(frames: usize) -> usize {
        frames.div_ceil(2)
    }

    /// Pair consecutive frames into `ceil(T/2) × 2·n_mels` rows; an odd
    /// final frame is paired with a copy of itself.
    pub fn squeeze<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        let t = g.shape(x).0;
        let half = Self::squeezed_len(t);
        let x = if t % 2 == 1 {
            let index: Vec<usize> = (0..t).chain(std::iter::once(t - 1)).collect();
            g.gather_rows(x, &index)
        } else {
            x
        };
        g.reshape(x, half, 2 * self.n_mels)
    }

    /// Inverse of [`Self::squeeze`], dropping the duplicated frame.
    pub fn unsqueeze<R: Real>(&self, g: &mut Graph<'_, R>, y: Var, frames: usize) -> Var {
        let half = g.shape(y).0;
        let x = g.reshape(y, 2 * half, self.n_mels);
        if 2 * half == frames {
            x
        } else {
            g.slice_rows(x, 0, frames)
        }
    }

    fn check_cond<R: Real>(&self, g: &Graph<'_, R>, cond: Var) -> Result<(), TtsError> {
        if g.shape(cond).0 != 1 {
            return Err(TtsError::Shape("flow condition must be a single row".into()));
        }
        Ok(())
    }

    fn check_finite<R: Real>(g: &Graph<'_, R>, v: Var, what: &str) -> Result<(), TtsError> {
        if g.value(v).is_finite() {
            Ok(())
        } else {
            Err(TtsError::NonFinite(format!("flow {what}")))
        }
    }

    /// Squeezed rows that enter the likelihood: the final row of an
    /// odd-length input holds the last frame and its duplicate and is left
    /// out.
    pub fn counted_rows(frames: usize) -> usize {
        frames / 2
    }

    /// Mel frames (`T × n_mels`) to the squeezed latent
    /// (`ceil(T/2) × 2·n_mels`). The log-determinant covers the
    /// [`Self::counted_rows`] leading rows.
    pub fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, cond: Var) -> Result<FlowOutput, TtsError> {
        let (t, c) = g.shape(x);
        if t == 0 || c != self.n_mels {
            return Err(TtsError::Shape(format!("flow input {t}×{c}, expected T×{}", self.n_mels)));
        }
        self.check_cond(g, cond)?;
        let rows = Self::counted_rows(t);
        let mut y = self.squeeze(g, x);
        let mut logdet = g.constant(Tensor::zeros(1, 1));
        for b in &self.blocks {
            let (a, l1) = b.actnorm.forward(g, y, rows);
            let (a, l2) = b.invconv.forward(g, a, rows);
            let (a, l3) = b.coupling.forward(g, a, cond, rows);
            y = a;
            logdet = g.add(logdet, l1);
            logdet = g.add(logdet, l2);
            logdet = g.add(logdet, l3);
        }
        Self::check_finite(g, y, "latent")?;
        Self::check_finite(g, logdet, "log-determinant")?;
        Ok(FlowOutput { z: y, logdet })
    }

    /// Squeezed latent back to `frames` mel frames.
    pub fn inverse<R: Real>(&self, g: &mut Graph<'_, R>, z: Var, cond: Var, frames: usize) -> Result<Var, TtsError> {
        let (rows, c) = g.shape(z);
        if c != 2 * self.n_mels || rows != Self::squeezed_len(frames) || frames == 0 {
            return Err(TtsError::Shape(format!(
                "latent {rows}×{c} cannot produce {frames} frames of {} bins",
                self.n_mels
            )));
        }
        self.check_cond(g, cond)?;
        let mut y = z;
        for b in self.blocks.iter().rev() {
            y = b.coupling.inverse(g, y, cond);
            y = b.invconv.inverse(g, y)?;
            y = b.actnorm.inverse(g, y);
        }
        Self::check_finite(g, y, "inverse")?;
        Ok(self.unsqueeze(g, y, frames))
    }

    /// Negative log-likelihood per counted mel value of `x` under the
    /// unit-variance Gaussian prior with frame-level mean `mu`, minus the
    /// log-determinant. Needs at least two frames.
    pub fn nll<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, mu: Var, cond: Var) -> Result<Var, TtsError> {
        let (t, c) = g.shape(x);
        if g.shape(mu) != (t, c) {
            return Err(TtsError::Shape(format!("prior mean {:?} vs frames {:?}", g.shape(mu), (t, c))));
        }
        let rows = Self::counted_rows(t);
        if rows == 0 {
            return Err(TtsError::TooFewFrames { phonemes: 1, frames: t });
        }
        let out = self.forward(g, x, cond)?;
        let mu = self.squeeze(g, mu);
        let d = g.sub(out.z, mu);
        let d = if rows < g.shape(d).0 { g.slice_rows(d, 0, rows) } else { d };
        let d2 = g.square(d);
        let sq = g.sum(d2);
        let sq = g.scale(sq, R::from_f64_lossy(0.5));
        let nl = g.sub(sq, out.logdet);
        let n = (rows * 2 * c) as f64;
        let nl = g.scale(nl, R::from_f64_lossy(1.0 / n));
        Ok(g.add_scalar(nl, R::from_f64_lossy(0.5 * (2.0 * std::f64::consts::PI).ln())))
    }

    /// Draw `z ~ N(mu, temperature)` and invert it.
    pub fn sample<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        mu: Var,
        cond: Var,
        temperature: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<Var, TtsError> {
        let (t, c) = g.shape(mu);
        let sd = temperature.max(0.0).sqrt();
        let noise = Tensor::from_fn(t, c, |_, _| {
            let e: f64 = StandardNormal.sample(rng);
            R::from_f64_lossy(sd * e)
        });
        let noise = g.constant(noise);
        let z = g.add(mu, noise);
        let z = self.squeeze(g, z);
        self.inverse(g, z, cond, t)
    }
}
