mod common;

use std::time::Instant;

use common::*;
use synthasr_tts::{train_tts, SamplingConfig, TtsModel, Variant};

/// Resynthesis of the training utterances with their reference durations.
fn distance(model: &TtsModel, data: &[synthasr_tts::TtsExample]) -> f64 {
    let sampling = SamplingConfig::default();
    data.iter()
        .map(|ex| {
            let d = ex.durations.as_ref().unwrap();
            let s = model.synthesize_with_durations(&ex.phonemes, ex.speaker, d, &sampling).unwrap();
            mean_abs_diff(&s.mel, &ex.mel)
        })
        .sum::<f64>()
        / data.len() as f64
}

fn overfit(variant: Variant, epochs: f64, lr: f64) {
    let data = corpus(5, 21);
    let start = Instant::now();
    let untrained = TtsModel::new(tiny_config(variant), 7).unwrap();
    let base = distance(&untrained, &data);
    let mut model = untrained.clone();
    let report = train_tts(&mut model, &data, &train_config(epochs, lr), |_, _| {}).unwrap();
    let trained = distance(&model, &data);
    eprintln!(
        "{variant}: untrained {base:.4}, trained {trained:.4}, ratio {:.3}, loss {:.4} -> {:.4}, {:.1}s",
        trained / base,
        report.epoch_losses[0],
        report.epoch_losses.last().unwrap(),
        start.elapsed().as_secs_f64()
    );
    assert!(trained < 0.25 * base, "{variant}: {trained} vs untrained {base}");
}

#[test]
fn transformer_overfits() {
    overfit(Variant::Transformer, 150.0, 3e-3);
}

#[test]
fn nar_lstm_overfits() {
    overfit(Variant::NarLstm, 150.0, 3e-3);
}

#[test]
fn ar_lstm_overfits() {
    overfit(Variant::ArLstm, 150.0, 3e-3);
}

#[test]
fn flow_overfits() {
    overfit(Variant::Flow, 500.0, 3e-3);
}

#[test]
fn diffusion_overfits() {
    overfit(Variant::Diffusion, 150.0, 3e-3);
}
