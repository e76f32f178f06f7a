use num_complex::Complex64;
use rand::Rng;

use crate::stft::{ComplexSpectrogram, Stft};
use crate::{AudioSignal, DspError, FeatureConfig, LinearSpectrogram};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GriffinLimConfig {
    pub iterations: usize,
    pub momentum: f64,
    /// `None` starts from zero phase; `Some(seed)` from seeded uniform phase.
    pub phase_seed: Option<u64>,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self {
            iterations: 32,
            momentum: 0.99,
            phase_seed: None,
        }
    }
}

/// Waveform plus `‖|STFT(y_k)| − mag‖ / ‖mag‖` for the signal synthesized
/// after `k` phase updates, `k = 0..=iterations`.
#[derive(Clone, Debug)]
pub struct GriffinLimOutput {
    pub signal: AudioSignal,
    pub consistency: Vec<f64>,
}

fn spectral_error(rebuilt: &ComplexSpectrogram, mag: &[f64], mag_norm: f64) -> f64 {
    if mag_norm == 0.0 {
        return 0.0;
    }
    let e: f64 = rebuilt
        .data
        .iter()
        .zip(mag)
        .map(|(c, m)| (c.norm() - m).powi(2))
        .sum();
    e.sqrt() / mag_norm
}

fn run(
    mag: &LinearSpectrogram,
    config: &FeatureConfig,
    gl: &GriffinLimConfig,
    trace: bool,
) -> Result<GriffinLimOutput, DspError> {
    if gl.iterations == 0 {
        return Err(DspError::GriffinLim("iterations must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&gl.momentum) {
        return Err(DspError::GriffinLim("momentum must lie in [0, 1)".into()));
    }
    if mag.num_frames() == 0 || mag.bins() == 0 {
        return Err(DspError::EmptySpectrogram);
    }
    let stft = Stft::new(config)?;
    if mag.bins() != stft.bins() {
        return Err(DspError::Shape(format!(
            "magnitudes have {} bins, config expects {}",
            mag.bins(),
            stft.bins()
        )));
    }
    let (frames, bins) = (mag.num_frames(), mag.bins());
    let m = mag.magnitudes.data();
    let mag_norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut angles: Vec<Complex64> = match gl.phase_seed {
        None => vec![Complex64::new(1.0, 0.0); m.len()],
        Some(seed) => {
            let mut rng = synthasr_nn::rng(seed);
            (0..m.len())
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect()
        }
    };
    let synth = |angles: &[Complex64]| -> Result<Vec<f64>, DspError> {
        let data = angles.iter().zip(m).map(|(a, &v)| a * v).collect();
        stft.inverse(&ComplexSpectrogram { frames, bins, data })
    };
    let mut consistency = Vec::new();
    let mut prev = vec![Complex64::new(0.0, 0.0); m.len()];
    let accel = gl.momentum / (1.0 + gl.momentum);
    for _ in 0..gl.iterations {
        let y = synth(&angles)?;
        let rebuilt = stft.forward(&y)?;
        if trace {
            consistency.push(spectral_error(&rebuilt, m, mag_norm));
        }
        for ((a, r), p) in angles.iter_mut().zip(&rebuilt.data).zip(&prev) {
            let v = r - p * accel;
            *a = v / (v.norm() + 1e-16);
        }
        prev = rebuilt.data;
    }
    let y = synth(&angles)?;
    if trace {
        consistency.push(spectral_error(&stft.forward(&y)?, m, mag_norm));
    }
    let samples = y.iter().map(|&v| v as f32).collect();
    Ok(GriffinLimOutput {
        signal: AudioSignal::new(samples, config.sample_rate_hz)?,
        consistency,
    })
}

pub fn griffin_lim(
    mag: &LinearSpectrogram,
    config: &FeatureConfig,
    gl: &GriffinLimConfig,
) -> Result<AudioSignal, DspError> {
    run(mag, config, gl, false).map(|o| o.signal)
}

/// Like [`griffin_lim`], also recording the consistency error per iteration.
pub fn griffin_lim_traced(
    mag: &LinearSpectrogram,
    config: &FeatureConfig,
    gl: &GriffinLimConfig,
) -> Result<GriffinLimOutput, DspError> {
    run(mag, config, gl, true)
}
