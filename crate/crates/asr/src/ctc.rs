//! Connectionist temporal classification loss in the log domain.

use synthasr_nn::{Graph, Real, Tensor, Var};

use crate::AsrError;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Fewest frames that can emit `labels`: one per label plus a blank
/// between each pair of equal neighbours.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Negative log-likelihood and its gradient with respect to every entry of
/// `log_probs` (`T×V`, row-major). `log_probs` are treated as free inputs,
/// so callers that normalize in-graph get the softmax Jacobian applied by
/// the graph.
pub fn ctc_loss_and_grad(
    log_probs: &[f64],
    frames: usize,
    vocab: usize,
    labels: &[usize],
    blank: usize,
) -> Result<(f64, Vec<f64>), AsrError> {
    if log_probs.len() != frames * vocab {
        return Err(AsrError::Shape(format!(
            "{} log-probabilities for {frames}x{vocab}",
            log_probs.len()
        )));
    }
    if blank >= vocab {
        return Err(AsrError::UnknownLabel { id: blank, size: vocab });
    }
    if let Some(&id) = labels.iter().find(|&&l| l >= vocab || l == blank) {
        return Err(AsrError::UnknownLabel { id, size: vocab });
    }
    let required = min_frames(labels);
    if frames < required {
        return Err(AsrError::LabelTooLong {
            labels: labels.len(),
            required,
            frames,
        });
    }
    if frames == 0 {
        return Ok((0.0, Vec::new()));
    }
    if log_probs.iter().any(|v| v.is_nan()) {
        return Err(AsrError::NonFinite("ctc input".into()));
    }
    let lp = |t: usize, k: usize| log_probs[t * vocab + k];
    // Blank-augmented sequence: ∅ l1 ∅ l2 ... ∅
    let s_len = 2 * labels.len() + 1;
    let ext: Vec<usize> = (0..s_len)
        .map(|s| if s % 2 == 0 { blank } else { labels[s / 2] })
        .collect();
    let skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = lp(0, ext[0]);
    if s_len > 1 {
        alpha[1] = lp(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            alpha[t * s_len + s] = if a == ninf { ninf } else { a + lp(t, ext[s]) };
        }
    }
    let last = (frames - 1) * s_len;
    let mut log_z = alpha[last + s_len - 1];
    if s_len > 1 {
        log_z = log_add(log_z, alpha[last + s_len - 2]);
    }
    if !log_z.is_finite() {
        return Err(AsrError::NonFinite("ctc likelihood".into()));
    }

    let mut beta = vec![ninf; frames * s_len];
    beta[last + s_len - 1] = lp(frames - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[last + s_len - 2] = lp(frames - 1, ext[s_len - 2]);
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            beta[t * s_len + s] = if b == ninf { ninf } else { b + lp(t, ext[s]) };
        }
    }

    // alpha and beta both include the emission at t, so the occupancy of
    // state s at t is alpha + beta - lp.
    let mut grad = vec![0.0; frames * vocab];
    for t in 0..frames {
        let mut occ = vec![ninf; vocab];
        for (s, &k) in ext.iter().enumerate() {
            let i = t * s_len + s;
            if alpha[i] == ninf || beta[i] == ninf {
                continue;
            }
            occ[k] = log_add(occ[k], alpha[i] + beta[i] - lp(t, k));
        }
        for (k, o) in occ.into_iter().enumerate() {
            if o != ninf {
                grad[t * vocab + k] = -(o - log_z).exp();
            }
        }
    }
    Ok((-log_z, grad))
}

/// CTC loss of a `T×V` log-probability node as a scalar graph node.
pub fn ctc_loss<R: Real>(
    g: &mut Graph<'_, R>,
    log_probs: Var,
    labels: &[usize],
    blank: usize,
) -> Result<Var, AsrError> {
    let (frames, vocab) = g.shape(log_probs);
    let lp: Vec<f64> = g.value(log_probs).data().iter().map(|v| v.as_f64()).collect();
    let (loss, grad) = ctc_loss_and_grad(&lp, frames, vocab, labels, blank)?;
    let grad = grad.into_iter().map(R::from_f64_lossy).collect();
    Ok(g.custom_scalar(log_probs, R::from_f64_lossy(loss), grad))
}

/// Loss of a plain tensor, without gradients.
pub fn ctc_loss_value<R: Real>(log_probs: &Tensor<R>, labels: &[usize], blank: usize) -> Result<f64, AsrError> {
    let (frames, vocab) = log_probs.shape();
    let lp: Vec<f64> = log_probs.data().iter().map(|v| v.as_f64()).collect();
    Ok(ctc_loss_and_grad(&lp, frames, vocab, labels, blank)?.0)
}
