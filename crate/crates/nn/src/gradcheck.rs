//! Central finite-difference oracle for analytic gradients (64-bit).

use crate::{Graph, ParamStore, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst: String,
}

impl GradCheck {
    fn new() -> Self {
        Self {
            max_rel_err: 0.0,
            checked: 0,
            worst: String::new(),
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64, label: impl FnOnce() -> String) {
        let err = rel_err(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_err {
            self.max_rel_err = err;
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", label());
        }
    }
}

/// `|a−n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients from
/// reporting huge relative errors out of round-off.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn sample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|i| i * len / max).collect()
    }
}

/// Compare parameter gradients of `loss` with central differences.
/// `loss` is rebuilt for every perturbation on a graph with the same
/// `train` flag and `seed`, so stochastic masks are identical across runs.
pub fn check_params(
    store: &ParamStore<f64>,
    train: bool,
    seed: u64,
    eps: f64,
    max_per_param: usize,
    loss: impl Fn(&mut Graph<'_, f64>) -> Var,
) -> GradCheck {
    let grads = {
        let mut g = Graph::with_params(store, train, seed);
        let l = loss(&mut g);
        g.backward(l).expect("scalar loss").into_param_grads(store)
    };
    let eval = |s: &ParamStore<f64>| {
        let mut g = Graph::with_params(s, train, seed);
        let l = loss(&mut g);
        g.scalar(l)
    };
    let mut report = GradCheck::new();
    let mut work = store.clone();
    for (id, p) in store.iter() {
        for i in sample_indices(p.value.len(), max_per_param) {
            let orig = p.value.data()[i];
            work.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&work);
            work.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&work);
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            report.record(grads.get(id)[i], numeric, || format!("{}[{i}]", p.name));
        }
    }
    report
}

/// Same check for the gradient w.r.t. an input tensor.
pub fn check_input(
    store: &ParamStore<f64>,
    input: &Tensor<f64>,
    eps: f64,
    loss: impl Fn(&mut Graph<'_, f64>, Var) -> Var,
) -> GradCheck {
    let analytic = {
        let mut g = Graph::with_params(store, false, 0);
        let x = g.input(input.clone());
        let l = loss(&mut g, x);
        g.backward(l)
            .expect("scalar loss")
            .wrt(x)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; input.len()])
    };
    let eval = |t: Tensor<f64>| {
        let mut g = Graph::with_params(store, false, 0);
        let x = g.input(t);
        let l = loss(&mut g, x);
        g.scalar(l)
    };
    let mut report = GradCheck::new();
    for (i, &a) in analytic.iter().enumerate() {
        let mut up = input.clone();
        up.data_mut()[i] += eps;
        let mut down = input.clone();
        down.data_mut()[i] -= eps;
        let numeric = (eval(up) - eval(down)) / (2.0 * eps);
        report.record(a, numeric, || format!("input[{i}]"));
    }
    report
}
