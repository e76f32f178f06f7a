use synthasr_nn::Tensor;

use crate::TtsError;

/// Monotonic alignment search over an `N × T` log-likelihood matrix.
///
/// Returns per-phoneme durations (all ≥ 1, summing to `T`) of the monotonic
/// segmentation with the highest total log-likelihood. Among equally good
/// segmentations the one with the longest last segment wins, then the
/// longest second-to-last, and so on: backtracking stays in the current
/// phoneme whenever that is no worse.
pub fn mas_align(loglik: &Tensor<f64>) -> Result<Vec<u32>, TtsError> {
    let (n, t) = loglik.shape();
    if n == 0 {
        return Err(TtsError::EmptySequence);
    }
    if n > t {
        return Err(TtsError::TooFewFrames {
            phonemes: n,
            frames: t,
        });
    }
    if !loglik.is_finite() {
        return Err(TtsError::NonFinite("alignment log-likelihoods".into()));
    }
    let neg = f64::NEG_INFINITY;
    // q[i][j]: best score with frame j assigned to phoneme i
    let mut q = vec![neg; n * t];
    q[0] = loglik.get(0, 0);
    for j in 1..t {
        for i in 0..n.min(j + 1) {
            let stay = q[i * t + j - 1];
            let advance = if i > 0 { q[(i - 1) * t + j - 1] } else { neg };
            q[i * t + j] = stay.max(advance) + loglik.get(i, j);
        }
    }
    let mut durations = vec![0u32; n];
    let mut i = n - 1;
    for j in (0..t).rev() {
        durations[i] += 1;
        if j == 0 {
            break;
        }
        if i > 0 {
            let stay = q[i * t + j - 1];
            let advance = q[(i - 1) * t + j - 1];
            if advance > stay {
                i -= 1;
            }
        }
    }
    debug_assert_eq!(i, 0);
    Ok(durations)
}

/// `−½‖z_t − μ_n‖²` for every phoneme/frame pair (unit-variance Gaussian up
/// to a constant that does not affect the alignment).
pub fn gaussian_loglik(means: &Tensor<f32>, frames: &Tensor<f32>) -> Result<Tensor<f64>, TtsError> {
    if means.cols() != frames.cols() {
        return Err(TtsError::Shape(format!(
            "means have {} channels, frames {}",
            means.cols(),
            frames.cols()
        )));
    }
    Ok(Tensor::from_fn(means.rows(), frames.rows(), |i, j| {
        -0.5 * means
            .row(i)
            .iter()
            .zip(frames.row(j))
            .map(|(m, z)| ((z - m) as f64).powi(2))
            .sum::<f64>()
    }))
}
