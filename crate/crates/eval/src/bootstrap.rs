use rand::Rng;
use synthasr_nn::rng;

use crate::EvalError;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear interpolation between order statistics of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval of the mean.
///
/// Scores are sorted before resampling and the seeded indices address
/// sorted positions, so any permutation of `scores` gives the same
/// interval for the same seed.
pub fn bootstrap_ci(scores: &[f64], level: f64, resamples: usize, seed: u64) -> Result<(f64, f64), EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::Level(level));
    }
    if resamples == 0 {
        return Err(EvalError::Invalid("bootstrap needs at least one resample".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::Invalid("non-finite score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return Ok((sorted[0], sorted[0]));
    }
    let mut r = rng(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| sorted[r.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}
