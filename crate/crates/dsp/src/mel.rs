use synthasr_nn::Tensor;

use crate::stft::{check_rate, Stft};
use crate::{AudioSignal, DspError, FeatureConfig};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters laid out uniformly on the mel scale.
///
/// Filter centres run from `mel(fmin)` to `mel(fmax)` and each triangle
/// reaches zero at its neighbours' centres, so at every FFT bin inside
/// `[fmin, fmax]` the weights across filters sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub bins: usize,
    /// `n_mels × bins`, row-major.
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(config: &FeatureConfig) -> Result<Self, DspError> {
        config.validate()?;
        let n_mels = config.n_mels;
        let bins = config.n_bins();
        let lo = hz_to_mel(config.fmin_hz);
        let hi = hz_to_mel(config.fmax_hz);
        let step = if n_mels > 1 {
            (hi - lo) / (n_mels - 1) as f64
        } else {
            hi - lo
        };
        let bin_hz = config.sample_rate_hz as f64 / config.fft_size as f64;
        let mut weights = vec![0.0; n_mels * bins];
        for k in 0..bins {
            let hz = k as f64 * bin_hz;
            if hz < config.fmin_hz || hz > config.fmax_hz {
                continue;
            }
            let m = hz_to_mel(hz);
            for j in 0..n_mels {
                let centre = lo + j as f64 * step;
                let w = 1.0 - (m - centre).abs() / step;
                if w > 0.0 {
                    weights[j * bins + k] = w;
                }
            }
        }
        // a single filter is flat over the band rather than a lone triangle
        if n_mels == 1 {
            for (k, w) in weights.iter_mut().enumerate() {
                let hz = k as f64 * bin_hz;
                if (config.fmin_hz..=config.fmax_hz).contains(&hz) {
                    *w = 1.0;
                }
            }
        }
        Ok(Self {
            n_mels,
            bins,
            weights,
        })
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.bins..(j + 1) * self.bins]
    }

    pub fn column_sum(&self, k: usize) -> f64 {
        (0..self.n_mels).map(|j| self.weights[j * self.bins + k]).sum()
    }

    /// Mel energies of one power-spectrum frame.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self
                .row(j)
                .iter()
                .zip(power)
                .map(|(w, p)| w * p)
                .sum();
        }
    }
}

/// `T × n_mels` log-Mel energies.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Tensor<f32>,
    pub config: FeatureConfig,
}

impl MelSpectrogram {
    pub fn new(frames: Tensor<f32>, config: FeatureConfig) -> Result<Self, DspError> {
        if frames.rows() == 0 {
            return Err(DspError::EmptySpectrogram);
        }
        if frames.cols() != config.n_mels {
            return Err(DspError::Shape(format!(
                "{} mel bins, config has {}",
                frames.cols(),
                config.n_mels
            )));
        }
        if !frames.is_finite() {
            return Err(DspError::NonFinite("mel spectrogram"));
        }
        Ok(Self { frames, config })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.cols()
    }
}

/// `T × (fft_size/2 + 1)` non-negative magnitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpectrogram {
    pub magnitudes: Tensor<f64>,
}

impl LinearSpectrogram {
    pub fn new(magnitudes: Tensor<f64>) -> Result<Self, DspError> {
        if magnitudes.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DspError::NonFinite("linear spectrogram (or negative magnitude)"));
        }
        Ok(Self { magnitudes })
    }

    pub fn num_frames(&self) -> usize {
        self.magnitudes.rows()
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.cols()
    }
}

/// STFT plan plus filterbank, reusable across utterances.
#[derive(Clone, Debug)]
pub struct MelExtractor {
    pub config: FeatureConfig,
    pub stft: Stft,
    pub filterbank: MelFilterbank,
}

impl MelExtractor {
    pub fn new(config: &FeatureConfig) -> Result<Self, DspError> {
        Ok(Self {
            config: config.clone(),
            stft: Stft::new(config)?,
            filterbank: MelFilterbank::new(config)?,
        })
    }

    /// Mel power frames (before the log), `T × n_mels` in f64.
    pub fn mel_power(&self, samples: &[f64]) -> Result<Tensor<f64>, DspError> {
        let spec = self.stft.forward(samples)?;
        let power = spec.power();
        Ok(self.power_to_mel(&Tensor::new(spec.frames, spec.bins, power)))
    }

    pub fn power_to_mel(&self, power: &Tensor<f64>) -> Tensor<f64> {
        let n = self.filterbank.n_mels;
        let mut out = Tensor::zeros(power.rows(), n);
        for t in 0..power.rows() {
            self.filterbank.apply(power.row(t), out.row_mut(t));
        }
        out
    }

    /// `log(max(mel, floor))` in f64.
    pub fn log_mel_f64(&self, samples: &[f64]) -> Result<Tensor<f64>, DspError> {
        let floor = self.config.log_floor;
        Ok(self.mel_power(samples)?.map(|v| v.max(floor).ln()))
    }

    pub fn log_mel(&self, signal: &AudioSignal) -> Result<MelSpectrogram, DspError> {
        check_rate(signal, &self.config)?;
        let samples: Vec<f64> = signal.samples.iter().map(|&s| s as f64).collect();
        let frames = self.log_mel_f64(&samples)?.cast();
        MelSpectrogram::new(frames, self.config.clone())
    }
}

pub fn log_mel(signal: &AudioSignal, config: &FeatureConfig) -> Result<MelSpectrogram, DspError> {
    MelExtractor::new(config)?.log_mel(signal)
}
