#![allow(dead_code)]

use rand::Rng;
use synthasr_nn::{rng, LrSchedule, OptimizerConfig, Tensor};
use synthasr_tts::{DecoderConfig, TrainConfig, TrunkConfig, TtsConfig, TtsExample, Variant};

pub const N_MELS: usize = 12;
pub const VOCAB: usize = 6;
pub const SPEAKERS: usize = 2;

pub fn tiny_config(variant: Variant) -> TtsConfig {
    let trunk = TrunkConfig {
        dim: 32,
        speaker_dim: 8,
        ffn_dim: 64,
        duration_channels: 32,
        layers: 1,
        ..TrunkConfig::toy(VOCAB, SPEAKERS)
    };
    let decoder = match DecoderConfig::toy(variant) {
        DecoderConfig::Transformer { heads, ffn_kernel, dropout, .. } => DecoderConfig::Transformer {
            layers: 1,
            heads,
            ffn_dim: 64,
            ffn_kernel,
            dropout,
        },
        DecoderConfig::NarLstm { dropout, mut postnet, .. } => {
            postnet.channels = 16;
            DecoderConfig::NarLstm {
                hidden: 24,
                layers: 1,
                dropout,
                postnet,
            }
        }
        DecoderConfig::ArLstm { zoneout, reduction, mut postnet, .. } => {
            postnet.channels = 16;
            DecoderConfig::ArLstm {
                hidden: 32,
                layers: 2,
                zoneout,
                prenet_dim: 16,
                prenet_dropout: 0.5,
                reduction,
                postnet,
            }
        }
        DecoderConfig::Flow { kernel, dilation_rate, dropout, input_noise, .. } => DecoderConfig::Flow {
            input_noise,
            blocks: 3,
            hidden: 16,
            wn_layers: 2,
            kernel,
            dilation_rate,
            dropout,
        },
        DecoderConfig::Diffusion { heads, schedule, max_snr_weight, .. } => DecoderConfig::Diffusion {
            mean_layers: 1,
            heads,
            ffn_dim: 64,
            unet_channels: 4,
            unet_mults: vec![1, 2],
            cond_dim: 8,
            schedule,
            crop_frames: 16,
            max_snr_weight,
        },
    };
    TtsConfig {
        n_mels: N_MELS,
        trunk,
        decoder,
    }
}

/// Spectrogram made of per-phoneme templates shifted per speaker.
pub fn render(phonemes: &[usize], speaker: usize, durations: &[u32]) -> Tensor<f32> {
    let rows: Vec<Vec<f32>> = phonemes
        .iter()
        .zip(durations)
        .flat_map(|(&p, &d)| {
            let row: Vec<f32> = (0..N_MELS)
                .map(|k| {
                    1.5 * (((p + 1) * (k + 1)) as f32 * 0.7).sin() + 0.5 * speaker as f32
                        - 0.25
                })
                .collect();
            std::iter::repeat_n(row, d as usize)
        })
        .collect();
    Tensor::from_rows(&rows)
}

pub fn corpus(n: usize, seed: u64) -> Vec<TtsExample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let len = r.random_range(3..6);
            let phonemes: Vec<usize> = (0..len).map(|_| r.random_range(1..VOCAB)).collect();
            let durations: Vec<u32> = (0..len).map(|_| r.random_range(2..5)).collect();
            let speaker = i % SPEAKERS;
            TtsExample {
                mel: render(&phonemes, speaker, &durations),
                phonemes,
                speaker,
                durations: Some(durations),
            }
        })
        .collect()
}

pub fn train_config(epochs: f64, lr: f64) -> TrainConfig {
    TrainConfig {
        batch_size: 5,
        schedule: LrSchedule::Constant {
            lr,
            total_epochs: epochs,
        },
        optimizer: OptimizerConfig::adam(),
        clip_norm: Some(5.0),
        seed: 1,
    }
}

pub fn mean_abs_diff(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
}
