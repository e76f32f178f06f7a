use synthasr_nn::layers::{zoneout_lstm_step, Linear, Lstm, LstmState, Mask, ZoneoutMode};
use synthasr_nn::{Builder, Graph, Tensor, Var};

use super::direct::{masked_l1, with_speaker, Postnet};
use crate::{PostnetConfig, TtsError};

/// Autoregressive zoneout-LSTM decoder emitting `reduction` frames per step.
#[derive(Clone, Debug)]
pub struct ArLstmDecoder {
    prenet: Vec<Linear>,
    prenet_dropout: f64,
    cells: Vec<Lstm>,
    zoneout: f64,
    reduction: usize,
    out: Linear,
    postnet: Postnet,
    n_mels: usize,
}

pub struct ArLstmParams<'a> {
    pub in_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub zoneout: f64,
    pub prenet_dim: usize,
    pub prenet_dropout: f64,
    pub reduction: usize,
    pub postnet: &'a PostnetConfig,
    pub n_mels: usize,
}

impl ArLstmDecoder {
    pub fn new(vb: &mut Builder<'_, f32>, p: &ArLstmParams<'_>) -> Self {
        let prenet = vec![
            Linear::new(&mut vb.sub("prenet0"), p.n_mels, p.prenet_dim),
            Linear::new(&mut vb.sub("prenet1"), p.prenet_dim, p.prenet_dim),
        ];
        let ctx = p.reduction * p.in_dim;
        let mut cells = Vec::new();
        let mut dim = p.prenet_dim + ctx;
        for i in 0..p.layers {
            cells.push(Lstm::new(&mut vb.sub(format!("lstm{i}")), dim, p.hidden));
            dim = p.hidden;
        }
        Self {
            prenet,
            prenet_dropout: p.prenet_dropout,
            cells,
            zoneout: p.zoneout,
            reduction: p.reduction,
            out: Linear::new(&mut vb.sub("out"), p.hidden + ctx, p.reduction * p.n_mels),
            postnet: Postnet::new(&mut vb.sub("postnet"), p.postnet, p.n_mels),
            n_mels: p.n_mels,
        }
    }

    /// Decoder steps needed for `frames` output frames.
    pub fn num_steps(&self, frames: usize) -> usize {
        frames.div_ceil(self.reduction)
    }

    fn mode(g: &Graph<'_, f32>) -> ZoneoutMode {
        if g.is_train() {
            ZoneoutMode::Train
        } else {
            ZoneoutMode::Eval
        }
    }

    fn prenet(&self, g: &mut Graph<'_, f32>, x: Var) -> Var {
        let mut x = x;
        for l in &self.prenet {
            x = l.forward(g, x);
            x = g.relu(x);
            x = g.dropout(x, self.prenet_dropout);
        }
        x
    }

    /// Per-step context: the conditioning rows of the `reduction` frames the
    /// step emits, side by side. The last row is repeated to fill the final
    /// step.
    fn step_context(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var) -> Var {
        let cond = with_speaker(g, h_t, spk);
        let (t, c) = g.shape(cond);
        let steps = self.num_steps(t);
        let index: Vec<usize> = (0..steps * self.reduction).map(|i| i.min(t - 1)).collect();
        let padded = g.gather_rows(cond, &index);
        g.reshape(padded, steps, self.reduction * c)
    }

    /// Teacher-forced decoder output and postnet output, both padded to
    /// `num_steps(T) · reduction` rows.
    pub fn forward_teacher(
        &self,
        g: &mut Graph<'_, f32>,
        h_t: Var,
        spk: Var,
        target: &Tensor<f32>,
    ) -> Result<(Var, Var), TtsError> {
        let t = target.rows();
        if g.shape(h_t).0 != t {
            return Err(TtsError::Shape(format!(
                "{} conditioning frames for a {t}-frame target",
                g.shape(h_t).0
            )));
        }
        let steps = self.num_steps(t);
        let r = self.reduction;
        let ctx = self.step_context(g, h_t, spk);
        let prev = Tensor::from_fn(steps, self.n_mels, |s, c| {
            if s == 0 {
                0.0
            } else {
                target.get(s * r - 1, c)
            }
        });
        let prev = g.constant(prev);
        let p = self.prenet(g, prev);
        let mut x = g.concat_cols(&[p, ctx]);
        let mode = Self::mode(g);
        for cell in &self.cells {
            let xp = cell.project_inputs(g, x);
            let mut state = cell.zero_state(g);
            let mut outs = Vec::with_capacity(steps);
            for s in 0..steps {
                let row = g.slice_rows(xp, s, 1);
                state = zoneout_lstm_step(g, cell, state, row, self.zoneout, mode);
                outs.push(state.h);
            }
            x = g.concat_rows(&outs);
        }
        let y = g.concat_cols(&[x, ctx]);
        let y = self.out.forward(g, y);
        let dec = g.reshape(y, steps * r, self.n_mels);
        let refined = self.postnet.refine(g, dec);
        Ok((dec, refined))
    }

    pub fn loss(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var, target: &Tensor<f32>) -> Result<Var, TtsError> {
        let (dec, refined) = self.forward_teacher(g, h_t, spk, target)?;
        let padded_len = g.shape(dec).0;
        let t = target.rows();
        let padded = Tensor::from_fn(padded_len, self.n_mels, |r, c| target.get(r.min(t - 1), c));
        let mask = Mask::prefix(padded_len, t);
        let a = masked_l1(g, dec, &padded, &mask)?;
        let b = masked_l1(g, refined, &padded, &mask)?;
        Ok(g.add(a, b))
    }

    /// Free-running generation of exactly `T` frames, feeding back the last
    /// pre-postnet frame of each step.
    pub fn generate(&self, g: &mut Graph<'_, f32>, h_t: Var, spk: Var) -> Var {
        let t = g.shape(h_t).0;
        let steps = self.num_steps(t);
        let r = self.reduction;
        let ctx = self.step_context(g, h_t, spk);
        let mode = Self::mode(g);
        let mut states: Vec<LstmState> = self.cells.iter().map(|c| c.zero_state(g)).collect();
        let mut prev = g.constant(Tensor::zeros(1, self.n_mels));
        let mut outs = Vec::with_capacity(steps);
        for s in 0..steps {
            let p = self.prenet(g, prev);
            let c = g.slice_rows(ctx, s, 1);
            let mut x = g.concat_cols(&[p, c]);
            for (cell, state) in self.cells.iter().zip(states.iter_mut()) {
                let xp = cell.project_inputs(g, x);
                *state = zoneout_lstm_step(g, cell, *state, xp, self.zoneout, mode);
                x = state.h;
            }
            let y = g.concat_cols(&[x, c]);
            let y = self.out.forward(g, y);
            prev = g.slice_cols(y, (r - 1) * self.n_mels, self.n_mels);
            outs.push(y);
        }
        let y = g.concat_rows(&outs);
        let dec = g.reshape(y, steps * r, self.n_mels);
        let refined = self.postnet.refine(g, dec);
        g.slice_rows(refined, 0, t)
    }
}
