use serde::{Deserialize, Serialize};

use crate::DspError;

/// How frames are positioned relative to the signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding: `T = floor((len - window) / hop) + 1`.
    None,
    /// Zero-pad `window / 2` samples on both sides so frame `t` is
    /// centred on sample `t * hop`.
    Center,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub n_mels: usize,
    pub frame_shift_ms: f64,
    pub window_ms: f64,
    pub fft_size: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
    pub padding: Padding,
}

impl FeatureConfig {
    /// 80 log-Mel bins with a 12.5 ms shift.
    pub fn tts() -> Self {
        Self {
            sample_rate_hz: 16_000,
            n_mels: 80,
            frame_shift_ms: 12.5,
            window_ms: 50.0,
            fft_size: 1024,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            log_floor: 1e-10,
            padding: Padding::Center,
        }
    }

    /// Same features with the 10 ms recognizer shift.
    pub fn asr() -> Self {
        Self {
            frame_shift_ms: 10.0,
            ..Self::tts()
        }
    }

    pub fn hop_samples(&self) -> usize {
        (self.frame_shift_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn window_samples(&self) -> usize {
        (self.window_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate_hz as f64 / 2.0
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: &str| Err(DspError::Config(m.to_string()));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive");
        }
        if self.frame_shift_ms.is_nan() || self.frame_shift_ms <= 0.0 || self.frame_shift_ms > self.window_ms {
            return bad("frame shift must be positive and at most the window length");
        }
        if self.hop_samples() == 0 {
            return bad("frame shift is shorter than one sample");
        }
        if self.fft_size < self.window_samples() {
            return bad("fft_size is smaller than the window");
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return bad("log_floor must be positive");
        }
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz) {
            return bad("need 0 <= fmin < fmax");
        }
        if self.fmax_hz > self.nyquist() {
            return Err(DspError::FmaxAboveNyquist {
                fmax: self.fmax_hz,
                nyquist: self.nyquist(),
            });
        }
        Ok(())
    }

    /// 16 hex digits identifying the config, stored in spectrogram headers.
    pub fn hash(&self) -> String {
        synthasr_nn::checkpoint::config_hash(self)
    }
}
