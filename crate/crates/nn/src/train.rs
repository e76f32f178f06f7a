use rayon::prelude::*;

use crate::{derive_seed, Graph, NnError, ParamGrads, ParamStore, Real, Var};

/// Summed loss and gradients over `items` independent training graphs.
///
/// Item `i` gets a graph in training mode seeded from `(seed, i)`. Graphs are
/// evaluated in parallel and reduced in index order, so the result is the
/// same for any thread count.
pub fn batch_gradients<R, E, F>(
    store: &ParamStore<R>,
    items: usize,
    seed: u64,
    loss: F,
) -> Result<(f64, ParamGrads<R>), E>
where
    R: Real,
    E: From<NnError> + Send,
    F: Fn(&mut Graph<'_, R>, usize) -> Result<Var, E> + Sync,
{
    let parts: Vec<Result<(f64, ParamGrads<R>), E>> = (0..items)
        .into_par_iter()
        .map(|i| {
            let mut g = Graph::with_params(store, true, derive_seed(seed, &i.to_string()));
            let l = loss(&mut g, i)?;
            let value = g.scalar(l).as_f64();
            let grads = g.backward(l)?.into_param_grads(store);
            Ok((value, grads))
        })
        .collect();
    let mut total = 0.0;
    let mut sum = ParamGrads::zeros(store);
    for part in parts {
        let (l, g) = part?;
        total += l;
        sum.add_assign(&g);
    }
    Ok((total, sum))
}
