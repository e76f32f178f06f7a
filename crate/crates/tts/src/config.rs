use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::TtsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Transformer,
    NarLstm,
    ArLstm,
    Flow,
    Diffusion,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Transformer,
        Variant::NarLstm,
        Variant::ArLstm,
        Variant::Flow,
        Variant::Diffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Transformer => "transformer",
            Variant::NarLstm => "nar_lstm",
            Variant::ArLstm => "ar_lstm",
            Variant::Flow => "flow",
            Variant::Diffusion => "diffusion",
        }
    }

    /// Row label used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Transformer => "Transformer",
            Variant::NarLstm => "NAR LSTM",
            Variant::ArLstm => "AR LSTM",
            Variant::Flow => "Glow-TTS",
            Variant::Diffusion => "Grad-TTS",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = TtsError;

    fn from_str(s: &str) -> Result<Self, TtsError> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| TtsError::Config(format!("unknown decoder variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrunkConfig {
    pub vocab_size: usize,
    pub num_speakers: usize,
    pub dim: usize,
    pub speaker_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub ffn_kernel: usize,
    pub prenet_layers: usize,
    pub prenet_kernel: usize,
    pub dropout: f64,
    pub duration_channels: usize,
    pub duration_kernel: usize,
    /// Initial output bias of the duration predictor, in `log(d + 1)` units.
    pub duration_bias: f64,
}

impl TrunkConfig {
    /// 6 Transformer layers of width 256 behind 3 convolutions (kernel 5);
    /// duration predictor with 2 convolutions of 384 channels, kernel 3.
    pub fn full(vocab_size: usize, num_speakers: usize) -> Self {
        Self {
            vocab_size,
            num_speakers,
            dim: 256,
            speaker_dim: 256,
            heads: 2,
            layers: 6,
            ffn_dim: 1024,
            ffn_kernel: 3,
            prenet_layers: 3,
            prenet_kernel: 5,
            dropout: 0.1,
            duration_channels: 384,
            duration_kernel: 3,
            duration_bias: 2.0,
        }
    }

    pub fn toy(vocab_size: usize, num_speakers: usize) -> Self {
        Self {
            vocab_size,
            num_speakers,
            dim: 64,
            speaker_dim: 16,
            heads: 2,
            layers: 2,
            ffn_dim: 128,
            ffn_kernel: 3,
            prenet_layers: 2,
            prenet_kernel: 5,
            dropout: 0.0,
            duration_channels: 64,
            duration_kernel: 3,
            duration_bias: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostnetConfig {
    pub layers: usize,
    pub channels: usize,
    pub kernel: usize,
    pub dropout: f64,
}

impl PostnetConfig {
    /// 5 convolutions, 512 channels, kernel 5, tanh.
    pub fn full() -> Self {
        Self {
            layers: 5,
            channels: 512,
            kernel: 5,
            dropout: 0.1,
        }
    }
}

/// Linear `β(t) = beta_min + (beta_max − beta_min)·t` on `t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.05,
            beta_max: 20.0,
        }
    }
}

impl NoiseSchedule {
    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + (self.beta_max - self.beta_min) * t
    }

    /// `∫_0^t β(s) ds`.
    pub fn integral(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }

    /// Signal coefficient `exp(−½∫β)` of the forward process.
    pub fn alpha(&self, t: f64) -> f64 {
        (-0.5 * self.integral(t)).exp()
    }

    /// Noise variance `1 − exp(−∫β)` of the forward process.
    pub fn variance(&self, t: f64) -> f64 {
        -(-self.integral(t)).exp_m1()
    }

    /// Midpoint time of reverse step `i ∈ 1..=steps`.
    pub fn step_time(i: usize, steps: usize) -> f64 {
        (i as f64 - 0.5) / steps as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DecoderConfig {
    Transformer {
        layers: usize,
        heads: usize,
        ffn_dim: usize,
        ffn_kernel: usize,
        dropout: f64,
    },
    NarLstm {
        hidden: usize,
        layers: usize,
        dropout: f64,
        postnet: PostnetConfig,
    },
    ArLstm {
        hidden: usize,
        layers: usize,
        zoneout: f64,
        prenet_dim: usize,
        prenet_dropout: f64,
        reduction: usize,
        postnet: PostnetConfig,
    },
    Flow {
        blocks: usize,
        hidden: usize,
        wn_layers: usize,
        kernel: usize,
        dilation_rate: usize,
        dropout: f64,
        /// Standard deviation of Gaussian noise added to normalized training
        /// frames before the flow; keeps the likelihood bounded on
        /// near-constant segments.
        #[serde(default)]
        input_noise: f64,
    },
    Diffusion {
        mean_layers: usize,
        heads: usize,
        ffn_dim: usize,
        unet_channels: usize,
        unet_mults: Vec<usize>,
        cond_dim: usize,
        schedule: NoiseSchedule,
        crop_frames: usize,
        /// Upper bound on the `α²/σ²` loss weight.
        max_snr_weight: f64,
    },
}

impl DecoderConfig {
    pub fn variant(&self) -> Variant {
        match self {
            DecoderConfig::Transformer { .. } => Variant::Transformer,
            DecoderConfig::NarLstm { .. } => Variant::NarLstm,
            DecoderConfig::ArLstm { .. } => Variant::ArLstm,
            DecoderConfig::Flow { .. } => Variant::Flow,
            DecoderConfig::Diffusion { .. } => Variant::Diffusion,
        }
    }

    pub fn full(variant: Variant) -> Self {
        match variant {
            Variant::Transformer => DecoderConfig::Transformer {
                layers: 6,
                heads: 2,
                ffn_dim: 1024,
                ffn_kernel: 3,
                dropout: 0.1,
            },
            Variant::NarLstm => DecoderConfig::NarLstm {
                hidden: 512,
                layers: 2,
                dropout: 0.1,
                postnet: PostnetConfig::full(),
            },
            Variant::ArLstm => DecoderConfig::ArLstm {
                hidden: 1024,
                layers: 2,
                zoneout: 0.1,
                prenet_dim: 256,
                prenet_dropout: 0.5,
                reduction: 2,
                postnet: PostnetConfig::full(),
            },
            Variant::Flow => DecoderConfig::Flow {
                blocks: 12,
                hidden: 256,
                wn_layers: 4,
                kernel: 5,
                dilation_rate: 1,
                dropout: 0.05,
                input_noise: 0.05,
            },
            Variant::Diffusion => DecoderConfig::Diffusion {
                mean_layers: 2,
                heads: 2,
                ffn_dim: 1024,
                unet_channels: 64,
                unet_mults: vec![1, 2, 4],
                cond_dim: 256,
                schedule: NoiseSchedule::default(),
                crop_frames: 160,
                max_snr_weight: 5.0,
            },
        }
    }

    pub fn toy(variant: Variant) -> Self {
        let postnet = PostnetConfig {
            layers: 3,
            channels: 64,
            kernel: 5,
            dropout: 0.0,
        };
        match variant {
            Variant::Transformer => DecoderConfig::Transformer {
                layers: 2,
                heads: 2,
                ffn_dim: 128,
                ffn_kernel: 3,
                dropout: 0.0,
            },
            Variant::NarLstm => DecoderConfig::NarLstm {
                hidden: 64,
                layers: 1,
                dropout: 0.0,
                postnet,
            },
            Variant::ArLstm => DecoderConfig::ArLstm {
                hidden: 128,
                layers: 2,
                zoneout: 0.1,
                prenet_dim: 64,
                prenet_dropout: 0.5,
                reduction: 2,
                postnet,
            },
            Variant::Flow => DecoderConfig::Flow {
                blocks: 4,
                hidden: 64,
                wn_layers: 2,
                kernel: 3,
                dilation_rate: 1,
                dropout: 0.0,
                input_noise: 0.05,
            },
            Variant::Diffusion => DecoderConfig::Diffusion {
                mean_layers: 1,
                heads: 2,
                ffn_dim: 128,
                unet_channels: 8,
                unet_mults: vec![1, 2],
                cond_dim: 32,
                schedule: NoiseSchedule::default(),
                crop_frames: 32,
                max_snr_weight: 5.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Variance scale of the flow latent / diffusion starting noise.
    pub temperature: f64,
    pub diffusion_steps: usize,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), TtsError> {
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(TtsError::Config(format!(
                "sampling temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.diffusion_steps == 0 {
            return Err(TtsError::Config("diffusion needs at least one reverse step".into()));
        }
        Ok(())
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            diffusion_steps: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsConfig {
    pub n_mels: usize,
    pub trunk: TrunkConfig,
    pub decoder: DecoderConfig,
}

impl TtsConfig {
    pub fn variant(&self) -> Variant {
        self.decoder.variant()
    }

    pub fn validate(&self) -> Result<(), TtsError> {
        let t = &self.trunk;
        let bad = |m: String| Err(TtsError::Config(m));
        if t.vocab_size == 0 || t.num_speakers == 0 {
            return bad("vocabulary and speaker table must be non-empty".into());
        }
        if !t.dim.is_multiple_of(t.heads) {
            return bad(format!("trunk dim {} not divisible by {} heads", t.dim, t.heads));
        }
        match &self.decoder {
            DecoderConfig::ArLstm { reduction, zoneout, .. } => {
                if *reduction == 0 {
                    return bad("reduction factor must be positive".into());
                }
                if !(0.0..=1.0).contains(zoneout) {
                    return bad("zoneout rate must lie in [0, 1]".into());
                }
            }
            DecoderConfig::Flow { blocks, .. } if *blocks == 0 => {
                return bad("flow needs at least one block".into())
            }
            DecoderConfig::Diffusion { unet_mults, .. } if unet_mults.is_empty() => {
                return bad("u-net needs at least one level".into())
            }
            _ => {}
        }
        Ok(())
    }
}
