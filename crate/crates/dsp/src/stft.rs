use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{DspError, FeatureConfig, Padding};

/// Periodic Hann window of `n` samples.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex one-sided spectrum, `frames × bins`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Precomputed window and FFT plans for one feature config.
#[derive(Clone)]
pub struct Stft {
    window: Vec<f64>,
    hop: usize,
    n_fft: usize,
    padding: Padding,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("window", &self.window.len())
            .field("hop", &self.hop)
            .field("n_fft", &self.n_fft)
            .field("padding", &self.padding)
            .finish()
    }
}

impl Stft {
    pub fn new(config: &FeatureConfig) -> Result<Self, DspError> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: hann(config.window_samples()),
            hop: config.hop_samples(),
            n_fft: config.fft_size,
            padding: config.padding,
            fwd: planner.plan_fft_forward(config.fft_size),
            inv: planner.plan_fft_inverse(config.fft_size),
        })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::None => 0,
            Padding::Center => self.window.len() / 2,
        }
    }

    pub fn num_frames(&self, len: usize) -> Result<usize, DspError> {
        let win = self.window.len();
        if len < win {
            return Err(DspError::SignalTooShort { len, window: win });
        }
        Ok((len + 2 * self.pad() - win) / self.hop + 1)
    }

    /// Signal length produced by [`Stft::inverse`] for `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        (frames - 1) * self.hop + self.window.len() - 2 * self.pad()
    }

    pub fn forward(&self, samples: &[f64]) -> Result<ComplexSpectrogram, DspError> {
        let frames = self.num_frames(samples.len())?;
        let p = self.pad();
        let n = samples.len();
        let at = |i: usize| -> f64 {
            if i < p || i - p >= n {
                0.0
            } else {
                samples[i - p]
            }
        };
        let bins = self.bins();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for t in 0..frames {
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (k, w) in self.window.iter().enumerate() {
                buf[k].re = at(t * self.hop + k) * w;
            }
            self.fwd.process(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(ComplexSpectrogram { frames, bins, data })
    }

    /// Weighted overlap-add inverse; exact for consistent spectrograms.
    pub fn inverse(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>, DspError> {
        if spec.frames == 0 {
            return Err(DspError::EmptySpectrogram);
        }
        if spec.bins != self.bins() {
            return Err(DspError::Shape(format!(
                "spectrogram has {} bins, plan expects {}",
                spec.bins,
                self.bins()
            )));
        }
        let win = self.window.len();
        let full = (spec.frames - 1) * self.hop + win;
        let mut out = vec![0.0; full];
        let mut norm = vec![0.0; full];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let scale = 1.0 / self.n_fft as f64;
        for t in 0..spec.frames {
            let frame = spec.frame(t);
            buf[..spec.bins].copy_from_slice(frame);
            for k in 1..self.n_fft - spec.bins + 1 {
                buf[self.n_fft - k] = frame[k].conj();
            }
            // imaginary parts at DC and Nyquist are not representable in a real signal
            buf[0].im = 0.0;
            if self.n_fft.is_multiple_of(2) {
                buf[self.n_fft / 2].im = 0.0;
            }
            self.inv.process(&mut buf);
            for (k, w) in self.window.iter().enumerate() {
                out[t * self.hop + k] += buf[k].re * scale * w;
                norm[t * self.hop + k] += w * w;
            }
        }
        for (o, n) in out.iter_mut().zip(&norm) {
            if *n > 1e-10 {
                *o /= n;
            }
        }
        let p = self.pad();
        Ok(out[p..full - p].to_vec())
    }
}

/// STFT of a signal under `config`.
pub fn stft(signal: &crate::AudioSignal, config: &FeatureConfig) -> Result<ComplexSpectrogram, DspError> {
    check_rate(signal, config)?;
    let samples: Vec<f64> = signal.samples.iter().map(|&s| s as f64).collect();
    Stft::new(config)?.forward(&samples)
}

pub(crate) fn check_rate(signal: &crate::AudioSignal, config: &FeatureConfig) -> Result<(), DspError> {
    if signal.sample_rate_hz != config.sample_rate_hz {
        return Err(DspError::Config(format!(
            "signal sampled at {} Hz, features configured for {} Hz",
            signal.sample_rate_hz, config.sample_rate_hz
        )));
    }
    Ok(())
}
