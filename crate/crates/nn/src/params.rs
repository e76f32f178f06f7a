use std::collections::HashMap;
use std::fmt::Display;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{NnError, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Param<R> {
    pub name: String,
    pub value: Tensor<R>,
}

/// Named trainable tensors. Names are unique; ids are insertion indices.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<R> {
    params: Vec<Param<R>>,
    index: HashMap<String, ParamId>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<R>) -> Result<ParamId, NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, value });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<R>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Scalar counts grouped by the first `depth` dot-separated name parts.
    pub fn count_by_prefix(&self, depth: usize) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for p in &self.params {
            let key = p.name.split('.').take(depth).collect::<Vec<_>>().join(".");
            match out.iter_mut().find(|(k, _)| *k == key) {
                Some((_, n)) => *n += p.value.len(),
                None => out.push((key, p.value.len())),
            }
        }
        out
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Copy values from `other` by name; every parameter of `self` must be
    /// present with the same shape.
    pub fn load_from(&mut self, other: &ParamStore<R>) -> Result<(), NnError> {
        for p in &mut self.params {
            let src = other
                .id(&p.name)
                .ok_or_else(|| NnError::UnknownParam(p.name.clone()))?;
            let src = other.get(src);
            if src.shape() != p.value.shape() {
                return Err(NnError::Shape {
                    op: "load_from",
                    detail: format!(
                        "`{}` expects {:?}, found {:?}",
                        p.name,
                        p.value.shape(),
                        src.shape()
                    ),
                });
            }
            p.value = src.clone();
        }
        Ok(())
    }
}

/// Dense gradient buffers aligned with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ParamGrads<R> {
    grads: Vec<Vec<R>>,
}

impl<R: Real> ParamGrads<R> {
    pub fn zeros(store: &ParamStore<R>) -> Self {
        Self {
            grads: store
                .params
                .iter()
                .map(|p| vec![R::zero(); p.value.len()])
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[R] {
        &self.grads[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, g: &[R]) {
        self.grads[id.0].iter_mut().zip(g).for_each(|(o, &x)| *o += x);
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.iter_mut().zip(b).for_each(|(o, &x)| *o += x);
        }
    }

    pub fn scale(&mut self, s: R) {
        self.grads.iter_mut().flatten().for_each(|x| *x *= s);
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global L2 norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(R::from_f64_lossy(max_norm / norm));
        }
        norm
    }

    pub(crate) fn buffers(&self) -> &[Vec<R>] {
        &self.grads
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Const(f64),
    Normal(f64),
    Uniform(f64),
    /// Uniform with bound `1/sqrt(fan_in)`, fan-in taken as `rows`.
    FanIn,
    /// Glorot uniform over `rows + cols`.
    Xavier,
}

/// Hierarchical parameter factory; names are joined with `.`.
pub struct Builder<'a, R> {
    store: &'a mut ParamStore<R>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, R: Real> Builder<'a, R> {
    pub fn new(store: &'a mut ParamStore<R>, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: impl Display) -> Builder<'_, R> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        Builder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    pub fn param(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> ParamId {
        let n = rows * cols;
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Const(c) => vec![c; n],
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).expect("normal std");
                (0..n).map(|_| d.sample(self.rng)).collect()
            }
            Init::Uniform(a) => (0..n).map(|_| self.rng.random_range(-a..=a)).collect(),
            Init::FanIn => {
                let a = 1.0 / (rows.max(1) as f64).sqrt();
                (0..n).map(|_| self.rng.random_range(-a..=a)).collect()
            }
            Init::Xavier => {
                let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
                (0..n).map(|_| self.rng.random_range(-a..=a)).collect()
            }
        };
        let t = Tensor::new(rows, cols, data.into_iter().map(R::from_f64_lossy).collect());
        self.tensor(name, t)
    }

    /// Register an explicitly initialized tensor.
    pub fn tensor(&mut self, name: &str, t: Tensor<R>) -> ParamId {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        self.store
            .add(full, t)
            .unwrap_or_else(|e| panic!("model construction: {e}"))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }
}
