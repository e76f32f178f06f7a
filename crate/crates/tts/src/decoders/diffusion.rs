use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use synthasr_nn::layers::{
    sinusoidal_positions, Conv2d, Linear, Mask, TransformerBlock, TransformerConfig,
};
use synthasr_nn::{Builder, Graph, Init, Real, Tensor, Var};

use super::direct::{masked_l1, with_speaker};
use crate::{NoiseSchedule, TtsError};

/// Reverse-time probability-flow sampler.
///
/// Starts from `X_I = mu + sqrt(temperature)·ε` and applies, for
/// `i = I, …, 1` with `t_i = (i − ½)/I`,
/// `X_{i−1} = X_i − (1/(2I))·(mu − X_i − s(X_i, t_i))·β(t_i)`.
pub fn reverse_diffusion<F>(
    mu: &[f64],
    schedule: &NoiseSchedule,
    steps: usize,
    temperature: f64,
    rng: &mut impl Rng,
    mut score: F,
) -> Result<Vec<f64>, TtsError>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>, TtsError>,
{
    if steps == 0 {
        return Err(TtsError::Config("diffusion needs at least one reverse step".into()));
    }
    if temperature < 0.0 {
        return Err(TtsError::Config(format!("negative temperature {temperature}")));
    }
    let sd = temperature.sqrt();
    let mut x: Vec<f64> = mu
        .iter()
        .map(|&m| {
            let e: f64 = StandardNormal.sample(rng);
            m + sd * e
        })
        .collect();
    let h = 1.0 / steps as f64;
    for i in (1..=steps).rev() {
        let t = NoiseSchedule::step_time(i, steps);
        let beta = schedule.beta(t);
        let s = score(&x, t)?;
        if s.len() != x.len() {
            return Err(TtsError::Shape(format!("score of length {} for {} values", s.len(), x.len())));
        }
        for ((xi, &m), &si) in x.iter_mut().zip(mu).zip(&s) {
            *xi -= 0.5 * h * beta * (m - *xi - si);
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(TtsError::NonFinite("reverse diffusion".into()));
    }
    Ok(x)
}

/// Score implied by a prediction `d ≈ X_0 − mu`:
/// `s = −(X_t − mu − α(t)·d) / σ²(t)`.
pub fn score_from_prediction(schedule: &NoiseSchedule, t: f64, x_t: f64, mu: f64, d: f64) -> f64 {
    -(x_t - mu - schedule.alpha(t) * d) / schedule.variance(t)
}

/// Residual block with a per-channel conditioning bias.
#[derive(Clone, Debug)]
struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    cond: Linear,
    skip: Option<Linear>,
}

impl ResBlock {
    fn new<R: Real>(vb: &mut Builder<'_, R>, cin: usize, cout: usize, cond_dim: usize) -> Self {
        Self {
            conv1: Conv2d::new(&mut vb.sub("conv1"), cin, cout, 3, 1),
            conv2: Conv2d::new(&mut vb.sub("conv2"), cout, cout, 3, 1),
            cond: Linear::new(&mut vb.sub("cond"), cond_dim, cout),
            skip: (cin != cout).then(|| Linear::new(&mut vb.sub("skip"), cin, cout)),
        }
    }

    fn forward<R: Real>(&self, g: &mut Graph<'_, R>, x: Var, cond: Var, map: &Map) -> Var {
        let (y, _, _) = self.conv1.forward(g, x, map.h, map.w);
        let c = self.cond.forward(g, cond);
        let y = g.add_row(y, c);
        let y = g.silu(y);
        let y = map.apply(g, y);
        let (y, _, _) = self.conv2.forward(g, y, map.h, map.w);
        let y = g.silu(y);
        let r = match &self.skip {
            Some(l) => l.forward(g, x),
            None => x,
        };
        let y = g.add(r, y);
        map.apply(g, y)
    }
}

/// Spatial size and time mask of one u-net level.
struct Map {
    h: usize,
    w: usize,
    valid_rows: usize,
}

impl Map {
    fn apply<R: Real>(&self, g: &mut Graph<'_, R>, x: Var) -> Var {
        if self.valid_rows >= self.h {
            return x;
        }
        let col = Tensor::from_fn(self.h * self.w, 1, |i, _| {
            if i / self.w < self.valid_rows {
                R::one()
            } else {
                R::zero()
            }
        });
        let col = g.constant(col);
        g.mul_col(x, col)
    }

    fn down(&self) -> Map {
        Map {
            h: self.h.div_ceil(2),
            w: self.w.div_ceil(2),
            valid_rows: self.valid_rows.div_ceil(2),
        }
    }
}

/// Shape options of [`ScoreUNet`].
#[derive(Clone, Debug)]
pub struct UNetParams {
    pub n_mels: usize,
    pub channels: usize,
    pub mults: Vec<usize>,
    pub cond_dim: usize,
    pub speaker_dim: usize,
}

/// 2-D u-net over the `T × n_mels` plane with inputs `[X_t, mu]`; predicts
/// `X_0 − mu`.
#[derive(Clone, Debug)]
pub struct ScoreUNet {
    time_mlp: [Linear; 2],
    input: Conv2d,
    down: Vec<(ResBlock, Option<Conv2d>)>,
    mid: ResBlock,
    up: Vec<(ResBlock, Option<Conv2d>)>,
    output: Conv2d,
    cond_dim: usize,
    n_mels: usize,
    levels: usize,
}

impl ScoreUNet {
    pub fn new<R: Real>(vb: &mut Builder<'_, R>, p: &UNetParams) -> Self {
        let base = p.channels;
        let widths: Vec<usize> = p.mults.iter().map(|m| m * base).collect();
        let levels = widths.len();
        let mut down = Vec::new();
        let mut cin = base;
        for (i, &c) in widths.iter().enumerate() {
            let mut b = vb.sub(format!("down{i}"));
            let rb = ResBlock::new(&mut b.sub("res"), cin, c, p.cond_dim);
            let ds = (i + 1 < levels).then(|| Conv2d::new(&mut b.sub("downsample"), c, c, 3, 2));
            down.push((rb, ds));
            cin = c;
        }
        let last = *widths.last().expect("at least one level");
        let mid = ResBlock::new(&mut vb.sub("mid"), last, last, p.cond_dim);
        let mut up = Vec::new();
        let mut cin = last;
        for (i, &c) in widths.iter().enumerate().rev() {
            let mut b = vb.sub(format!("up{i}"));
            let rb = ResBlock::new(&mut b.sub("res"), cin + c, c, p.cond_dim);
            let us = (i > 0).then(|| Conv2d::new(&mut b.sub("upsample"), c, widths[i - 1], 3, 1));
            up.push((rb, us));
            cin = if i > 0 { widths[i - 1] } else { c };
        }
        Self {
            time_mlp: [
                Linear::new(&mut vb.sub("time0"), p.cond_dim + p.speaker_dim, p.cond_dim),
                Linear::new(&mut vb.sub("time1"), p.cond_dim, p.cond_dim),
            ],
            input: Conv2d::new(&mut vb.sub("input"), 2, base, 3, 1),
            down,
            mid,
            up,
            output: Conv2d::with_init(&mut vb.sub("output"), widths[0], 1, 1, 1, Init::Zeros),
            cond_dim: p.cond_dim,
            n_mels: p.n_mels,
            levels,
        }
    }

    /// Frame counts must be multiples of this.
    pub fn frame_multiple(&self) -> usize {
        1 << (self.levels - 1)
    }

    fn condition<R: Real>(&self, g: &mut Graph<'_, R>, t: f64, spk: Var) -> Var {
        let half = self.cond_dim / 2;
        let emb = Tensor::from_fn(1, self.cond_dim, |_, j| {
            let k = j % half.max(1);
            let freq = (-(10_000f64.ln()) * k as f64 / half.max(1) as f64).exp();
            let a = 1000.0 * t * freq;
            R::from_f64_lossy(if j < half { a.sin() } else { a.cos() })
        });
        let emb = g.constant(emb);
        let x = g.concat_cols(&[emb, spk]);
        let x = self.time_mlp[0].forward(g, x);
        let x = g.silu(x);
        self.time_mlp[1].forward(g, x)
    }

    /// Prediction of `X_0 − mu` for `T × n_mels` inputs. `T` must be a
    /// multiple of [`Self::frame_multiple`]; rows at or past `valid` are
    /// padding.
    pub fn forward<R: Real>(
        &self,
        g: &mut Graph<'_, R>,
        x_t: Var,
        mu: Var,
        t: f64,
        spk: Var,
        valid: usize,
    ) -> Result<Var, TtsError> {
        let (frames, c) = g.shape(x_t);
        if c != self.n_mels || g.shape(mu) != (frames, c) {
            return Err(TtsError::Shape(format!(
                "u-net inputs {:?} and {:?}",
                g.shape(x_t),
                g.shape(mu)
            )));
        }
        if frames == 0 || frames % self.frame_multiple() != 0 {
            return Err(TtsError::Shape(format!(
                "{frames} frames is not a multiple of {}",
                self.frame_multiple()
            )));
        }
        let cond = self.condition(g, t, spk);
        let a = g.reshape(x_t, frames * c, 1);
        let b = g.reshape(mu, frames * c, 1);
        let x = g.concat_cols(&[a, b]);
        let mut maps = vec![Map {
            h: frames,
            w: c,
            valid_rows: valid.min(frames),
        }];
        let (mut x, _, _) = self.input.forward(g, x, frames, c);
        let mut skips = Vec::new();
        for (i, (rb, ds)) in self.down.iter().enumerate() {
            x = rb.forward(g, x, cond, &maps[i]);
            skips.push(x);
            if let Some(ds) = ds {
                let (y, _, _) = ds.forward(g, x, maps[i].h, maps[i].w);
                x = y;
                let next = maps[i].down();
                maps.push(next);
            }
        }
        let deepest = maps.len() - 1;
        x = self.mid.forward(g, x, cond, &maps[deepest]);
        for (k, (rb, us)) in self.up.iter().enumerate() {
            let level = self.levels - 1 - k;
            let skip = skips[level];
            let joined = g.concat_cols(&[x, skip]);
            x = rb.forward(g, joined, cond, &maps[level]);
            if let Some(us) = us {
                let (src, dst) = (&maps[level], &maps[level - 1]);
                let index: Vec<usize> = (0..dst.h * dst.w)
                    .map(|p| {
                        let (r, q) = (p / dst.w, p % dst.w);
                        (r / 2).min(src.h - 1) * src.w + (q / 2).min(src.w - 1)
                    })
                    .collect();
                let y = g.gather_rows(x, &index);
                let (y, _, _) = us.forward(g, y, dst.h, dst.w);
                x = y;
            }
        }
        let (y, _, _) = self.output.forward(g, x, frames, c);
        let y = maps[0].apply(g, y);
        Ok(g.reshape(y, frames, c))
    }
}

/// Shape options of [`DiffusionDecoder`].
#[derive(Clone, Debug)]
pub struct DiffusionParams {
    pub in_dim: usize,
    pub dim: usize,
    pub mean_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub unet: UNetParams,
    pub schedule: NoiseSchedule,
    pub crop_frames: usize,
    pub max_snr_weight: f64,
}

/// Transformer mean network plus u-net score model.
#[derive(Clone, Debug)]
pub struct DiffusionDecoder {
    proj_in: Linear,
    blocks: Vec<TransformerBlock>,
    proj_out: Linear,
    dim: usize,
    pub unet: ScoreUNet,
    pub schedule: NoiseSchedule,
    crop_frames: usize,
    max_snr_weight: f64,
}

/// Smallest time drawn during training; keeps `σ²(t)` away from zero.
const T_MIN: f64 = 1e-5;

impl DiffusionDecoder {
    pub fn new(vb: &mut Builder<'_, f32>, p: &DiffusionParams) -> Self {
        let cfg = TransformerConfig {
            dim: p.dim,
            heads: p.heads,
            ffn_dim: p.ffn_dim,
            ffn_kernel: 3,
            dropout: 0.0,
        };
        Self {
            proj_in: Linear::new(&mut vb.sub("mean_in"), p.in_dim, p.dim),
            blocks: (0..p.mean_layers)
                .map(|i| TransformerBlock::new(&mut vb.sub(format!("mean{i}")), &cfg))
                .collect(),
            proj_out: Linear::new(&mut vb.sub("mean_out"), p.dim, p.unet.n_mels),
            dim: p.dim,
            unet: ScoreUNet::new(&mut vb.sub("unet"), &p.unet),
            schedule: p.schedule,
            crop_frames: p.crop_frames,
            max_snr_weight: p.max_snr_weight,
        }
    }

    /// Frame-level prior mean `mu` (`T × n_mels`).
    pub fn mean(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var) -> Result<Var, TtsError> {
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

    fn pad_rows(t: &Tensor<f32>, rows: usize) -> Tensor<f32> {
        Tensor::from_fn(rows, t.cols(), |r, c| if r < t.rows() { t.get(r, c) } else { 0.0 })
    }

    fn padded_len(&self, frames: usize) -> usize {
        frames.div_ceil(self.unet.frame_multiple()) * self.unet.frame_multiple()
    }

    /// Prior L1 term plus the weighted denoising term on a random crop.
    pub fn loss(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var, target: &Tensor<f32>) -> Result<Var, TtsError> {
        let frames = target.rows();
        let mu = self.mean(g, h_t, spk)?;
        let prior = masked_l1(g, mu, target, &Mask::all(frames))?;

        let crop = self.crop_frames.max(1).min(frames);
        let start = if frames > crop {
            g.rng().random_range(0..=frames - crop)
        } else {
            0
        };
        let t = g.rng().random_range(T_MIN..1.0);
        let alpha = self.schedule.alpha(t);
        let sd = self.schedule.variance(t).sqrt();
        let padded = self.padded_len(crop);

        let mu_crop = g.slice_rows(mu, start, crop);
        let mu_crop = g.detach(mu_crop);
        let mu_vals = g.value(mu_crop).clone();
        let x0 = target.slice_rows(start, crop);
        let mut noisy = Tensor::zeros(padded, target.cols());
        let mut residual = Tensor::zeros(padded, target.cols());
        for r in 0..crop {
            for c in 0..target.cols() {
                let e: f64 = StandardNormal.sample(g.rng());
                let m = mu_vals.get(r, c) as f64;
                let x = x0.get(r, c) as f64;
                noisy.set(r, c, (alpha * x + (1.0 - alpha) * m + sd * e) as f32);
                residual.set(r, c, (x - m) as f32);
            }
        }
        let mu_in = g.constant(Self::pad_rows(&mu_vals, padded));
        let x_t = g.constant(noisy);
        let d = self.unet.forward(g, x_t, mu_in, t, spk, crop)?;
        let r = g.constant(residual);
        let diff = g.sub(d, r);
        let sq = g.square(diff);
        let sq = g.sum(sq);
        let weight = (alpha * alpha / (sd * sd)).min(self.max_snr_weight);
        let denoise = g.scale(sq, (weight / (crop * target.cols()) as f64) as f32);
        Ok(g.add(prior, denoise))
    }

    /// Reverse-diffusion sampling of `T × n_mels` frames.
    pub fn generate(
        &self,
        g: &mut Graph<'_, f32>,
        h_t: Var,
        spk: Var,
        steps: usize,
        temperature: f64,
        rng: &mut impl Rng,
    ) -> Result<Tensor<f32>, TtsError> {
        let mu = self.mean(g, h_t, spk)?;
        let mu_vals = g.value(mu).clone();
        let spk_vals = g.value(spk).clone();
        let (frames, n) = mu_vals.shape();
        let padded = self.padded_len(frames);
        let mu_pad = Self::pad_rows(&mu_vals, padded);
        let flat: Vec<f64> = mu_vals.data().iter().map(|&v| v as f64).collect();
        let store = g.store();
        let schedule = self.schedule;
        let out = reverse_diffusion(&flat, &schedule, steps, temperature, rng, |x, t| {
            let mut sg = Graph::eval(store);
            let xt = Tensor::from_fn(padded, n, |r, c| if r < frames { x[r * n + c] as f32 } else { 0.0 });
            let xv = sg.constant(xt);
            let mv = sg.constant(mu_pad.clone());
            let sv = sg.constant(spk_vals.clone());
            let d = self.unet.forward(&mut sg, xv, mv, t, sv, frames)?;
            let d = sg.value(d);
            Ok((0..frames * n)
                .map(|i| {
                    let (r, c) = (i / n, i % n);
                    score_from_prediction(&schedule, t, x[i], flat[i], d.get(r, c) as f64)
                })
                .collect())
        })?;
        Ok(Tensor::new(frames, n, out.into_iter().map(|v| v as f32).collect()))
    }
}
