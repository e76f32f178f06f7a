use serde::{Deserialize, Serialize};

use crate::params::{ParamGrads, ParamStore};
use crate::{NnError, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 for `adam`, decoupled decay for `adamw`.
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw() -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            weight_decay: 1e-3,
            ..Self::adam()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let ok_beta = |b: f64| (0.0..1.0).contains(&b);
        if !ok_beta(self.beta1) || !ok_beta(self.beta2) {
            return Err(NnError::Config(format!(
                "betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if self.weight_decay < 0.0 || self.eps <= 0.0 {
            return Err(NnError::Config(
                "weight_decay must be >= 0 and eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Adam / AdamW with per-parameter first and second moment buffers.
#[derive(Clone, Debug)]
pub struct Optimizer<R> {
    config: OptimizerConfig,
    step: u64,
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
}

impl<R: Real> Optimizer<R> {
    pub fn new(config: OptimizerConfig, store: &ParamStore<R>) -> Result<Self, NnError> {
        config.validate()?;
        let buf = || {
            store
                .iter()
                .map(|(_, p)| vec![R::zero(); p.value.len()])
                .collect::<Vec<_>>()
        };
        Ok(Self {
            config,
            step: 0,
            m: buf(),
            v: buf(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update with learning rate `lr`. Gradients are checked for
    /// NaN/inf before any parameter is touched.
    pub fn step(
        &mut self,
        store: &mut ParamStore<R>,
        grads: &ParamGrads<R>,
        lr: f64,
    ) -> Result<(), NnError> {
        for ((id, p), g) in store.iter().zip(grads.buffers()) {
            if g.len() != p.value.len() {
                return Err(NnError::Shape {
                    op: "optimizer_step",
                    detail: format!("gradient for `{}` has wrong size", store.name(id)),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFiniteGradient(p.name.clone()));
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (R::from_f64_lossy(c.beta1), R::from_f64_lossy(c.beta2));
        let one = R::one();
        let lr_r = R::from_f64_lossy(lr);
        let eps = R::from_f64_lossy(c.eps);
        let wd = R::from_f64_lossy(c.weight_decay);
        let (rbc1, rbc2) = (R::from_f64_lossy(bc1), R::from_f64_lossy(bc2));
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = grads.get(id);
            let w = store.get_mut(id).data_mut();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..w.len() {
                let mut gi = g[i];
                if c.kind == OptimizerKind::Adam && c.weight_decay > 0.0 {
                    gi += wd * w[i];
                }
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mhat = m[i] / rbc1;
                let vhat = v[i] / rbc2;
                if c.kind == OptimizerKind::AdamW {
                    w[i] -= lr_r * wd * w[i];
                }
                w[i] -= lr_r * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
