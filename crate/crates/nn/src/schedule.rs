use serde::{Deserialize, Serialize};

use crate::NnError;

/// Epoch-indexed learning-rate schedule. Fractional epochs are used so the
/// rate can be updated every optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Linear ramp `lr_start → lr_peak` over `warmup_epochs`, then linear
    /// decay to `lr_end` at `total_epochs`.
    LinearTri {
        warmup_epochs: f64,
        total_epochs: f64,
        lr_start: f64,
        lr_peak: f64,
        lr_end: f64,
    },
    Constant { lr: f64, total_epochs: f64 },
}

impl LrSchedule {
    /// 5e-5 → 5e-4 over 100 epochs, then down to 5e-7 at epoch 400.
    pub fn tts() -> Self {
        Self::LinearTri {
            warmup_epochs: 100.0,
            total_epochs: 400.0,
            lr_start: 5e-5,
            lr_peak: 5e-4,
            lr_end: 5e-7,
        }
    }

    /// Constant 1e-4 used for the diffusion decoder.
    pub fn tts_diffusion() -> Self {
        Self::Constant {
            lr: 1e-4,
            total_epochs: 400.0,
        }
    }

    /// Peak 7e-4 over roughly 80 epochs; ramp shape mirrors the TTS one.
    pub fn asr() -> Self {
        Self::LinearTri {
            warmup_epochs: 8.0,
            total_epochs: 80.0,
            lr_start: 7e-5,
            lr_peak: 7e-4,
            lr_end: 7e-6,
        }
    }

    pub fn total_epochs(&self) -> f64 {
        match *self {
            Self::LinearTri { total_epochs, .. } | Self::Constant { total_epochs, .. } => {
                total_epochs
            }
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        match *self {
            Self::LinearTri {
                warmup_epochs,
                total_epochs,
                lr_start,
                lr_peak,
                lr_end,
            } => {
                if !(0.0..=total_epochs).contains(&warmup_epochs) {
                    return Err(NnError::Config(format!(
                        "warmup_epochs {warmup_epochs} must lie in [0, {total_epochs}]"
                    )));
                }
                if lr_start <= 0.0 || lr_peak <= 0.0 || lr_end <= 0.0 {
                    return Err(NnError::Config("learning rates must be > 0".into()));
                }
            }
            Self::Constant { lr, total_epochs } => {
                if lr <= 0.0 || total_epochs < 0.0 {
                    return Err(NnError::Config("learning rate must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: f64) -> Result<f64, NnError> {
        let total = self.total_epochs();
        if !(0.0..=total).contains(&epoch) {
            return Err(NnError::EpochOutOfRange { epoch, total });
        }
        Ok(match *self {
            Self::Constant { lr, .. } => lr,
            Self::LinearTri {
                warmup_epochs,
                total_epochs,
                lr_start,
                lr_peak,
                lr_end,
            } => {
                if epoch < warmup_epochs {
                    lerp(lr_start, lr_peak, epoch / warmup_epochs)
                } else if total_epochs > warmup_epochs {
                    lerp(
                        lr_peak,
                        lr_end,
                        (epoch - warmup_epochs) / (total_epochs - warmup_epochs),
                    )
                } else {
                    lr_peak
                }
            }
        })
    }
}

// Exact at both endpoints: f = 0 gives `a`, f = 1 gives `b`.
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a * (1.0 - f) + b * f
}
