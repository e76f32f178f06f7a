use synthasr_nn::{Graph, Var};

use crate::TtsError;

/// Index of the phoneme each output frame is copied from.
pub fn frame_to_phoneme(durations: &[u32]) -> Vec<usize> {
    durations
        .iter()
        .enumerate()
        .flat_map(|(n, &d)| std::iter::repeat_n(n, d as usize))
        .collect()
}

/// Repeat row `n` of `h` `durations[n]` times, in order.
pub fn upsample(g: &mut Graph<'_, f32>, h: Var, durations: &[u32]) -> Result<Var, TtsError> {
    let n = g.shape(h).0;
    if durations.len() != n {
        return Err(TtsError::Shape(format!(
            "{} durations for {n} encoder states",
            durations.len()
        )));
    }
    let index = frame_to_phoneme(durations);
    if index.is_empty() {
        return Err(TtsError::ZeroDuration);
    }
    Ok(g.gather_rows(h, &index))
}

/// Integer durations from real-valued predictions: round half up, clamp at
/// zero, reject an all-zero result.
pub fn round_durations(durations: &[f64]) -> Result<Vec<u32>, TtsError> {
    if let Some(d) = durations.iter().find(|d| !d.is_finite()) {
        return Err(TtsError::NonFinite(format!("duration prediction {d}")));
    }
    let out: Vec<u32> = durations
        .iter()
        .map(|&d| (d + 0.5).floor().max(0.0) as u32)
        .collect();
    if out.iter().all(|&d| d == 0) {
        return Err(TtsError::ZeroDuration);
    }
    Ok(out)
}

/// Durations implied by predicted `log(d + 1)` values.
pub fn durations_from_log(log_durations: &[f32]) -> Result<Vec<u32>, TtsError> {
    let real: Vec<f64> = log_durations.iter().map(|&l| (l as f64).exp() - 1.0).collect();
    round_durations(&real)
}
