use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use synthasr_dsp::*;

fn sine(freq: f64, secs: f64, amp: f64) -> Vec<f64> {
    let n = (16_000.0 * secs) as usize;
    (0..n)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
        .collect()
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = synthasr_nn::rng(seed);
    (0..n).map(|_| r.random_range(-0.5..0.5)).collect()
}

fn signal(samples: &[f64]) -> AudioSignal {
    AudioSignal::new(samples.iter().map(|&v| v as f32).collect(), 16_000).unwrap()
}

#[test]
fn zero_signal_has_zero_spectrum() {
    let spec = stft(&signal(&vec![0.0; 4000]), &FeatureConfig::tts()).unwrap();
    assert!(spec.data.iter().all(|c| c.norm() == 0.0));
}

#[test]
fn frame_count_follows_padding_mode() {
    let mut cfg = FeatureConfig::tts();
    let plan = Stft::new(&cfg).unwrap();
    // centred: floor((len + window - window) / hop) + 1
    assert_eq!(plan.num_frames(16_000).unwrap(), 81);
    cfg.padding = Padding::None;
    let plan = Stft::new(&cfg).unwrap();
    assert_eq!(plan.num_frames(16_000).unwrap(), (16_000 - 800) / 200 + 1);
    assert_eq!(plan.num_frames(800).unwrap(), 1);
    assert!(matches!(
        plan.num_frames(799),
        Err(DspError::SignalTooShort { len: 799, window: 800 })
    ));
    assert!(stft(&signal(&[0.1; 10]), &FeatureConfig::tts()).is_err());
}

#[test]
fn sine_peaks_at_nearest_bin_and_matches_direct_dft() {
    let cfg = FeatureConfig::tts();
    let x = sine(1000.0, 0.5, 0.8);
    let spec = stft(&signal(&x), &cfg).unwrap();
    let nearest = (1000.0f64 / (16_000.0 / 1024.0)).round() as usize;
    for t in 0..spec.frames {
        let mags: Vec<f64> = spec.frame(t).iter().map(|c| c.norm()).collect();
        let peak = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert_eq!(peak, nearest, "frame {t}");
    }
    // frame 10 lies inside the signal: samples 10*200-400 .. +800
    let w = stft::hann(800);
    let start = 10 * 200 - 400;
    for k in [0, 17, nearest, 300, 512] {
        let direct: Complex64 = (0..800)
            .map(|n| {
                let ang = -2.0 * PI * (k * n) as f64 / 1024.0;
                Complex64::from_polar(x[start + n] * w[n], ang)
            })
            .sum();
        // signal is f32-quantised on the way in
        assert!((direct - spec.frame(10)[k]).norm() < 1e-4, "bin {k}");
    }
}

#[test]
fn parseval_holds_per_frame() {
    let cfg = FeatureConfig {
        padding: Padding::None,
        ..FeatureConfig::tts()
    };
    let plan = Stft::new(&cfg).unwrap();
    let x = noise(3000, 5);
    let spec = plan.forward(&x).unwrap();
    let w = plan.window();
    for t in 0..spec.frames {
        let time: f64 = (0..800).map(|n| (x[t * 200 + n] * w[n]).powi(2)).sum();
        let f = spec.frame(t);
        let last = f.len() - 1;
        let freq: f64 = f
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 || k == last { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
            .sum::<f64>()
            / 1024.0;
        assert!((time - freq).abs() / time < 1e-6);
    }
}

#[test]
fn inverse_stft_reconstructs_signal() {
    let plan = Stft::new(&FeatureConfig::tts()).unwrap();
    let x = noise(16_000, 9);
    let y = plan.inverse(&plan.forward(&x).unwrap()).unwrap();
    assert_eq!(y.len(), x.len());
    let err = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-9, "{err}");
}

#[test]
fn log_mel_has_80_bins() {
    let mel = log_mel(&signal(&noise(8000, 1)), &FeatureConfig::tts()).unwrap();
    assert_eq!(mel.n_mels(), 80);
    assert_eq!(mel.num_frames(), 8000 / 200 + 1);
    let asr = log_mel(&signal(&noise(8000, 1)), &FeatureConfig::asr()).unwrap();
    assert_eq!(asr.n_mels(), 80);
    assert_eq!(asr.num_frames(), 8000 / 160 + 1);
}

#[test]
fn silence_sits_at_the_log_floor() {
    let cfg = FeatureConfig::tts();
    let mel = log_mel(&signal(&vec![0.0; 4000]), &cfg).unwrap();
    let want = (cfg.log_floor.ln()) as f32;
    assert!(mel.frames.data().iter().all(|&v| v == want));
}

#[test]
fn doubling_amplitude_shifts_by_log_four() {
    let ex = MelExtractor::new(&FeatureConfig::tts()).unwrap();
    let x = noise(4000, 3);
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let a = ex.log_mel_f64(&x).unwrap();
    let b = ex.log_mel_f64(&x2).unwrap();
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((v - u - 4f64.ln()).abs() < 1e-9);
    }
}

#[test]
fn fmax_above_nyquist_is_rejected() {
    let cfg = FeatureConfig {
        fmax_hz: 8001.0,
        ..FeatureConfig::tts()
    };
    assert!(matches!(
        log_mel(&signal(&[0.0; 1000]), &cfg),
        Err(DspError::FmaxAboveNyquist { .. })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = FeatureConfig::tts();
    for cfg in [
        FeatureConfig { n_mels: 0, ..base.clone() },
        FeatureConfig { frame_shift_ms: 60.0, ..base.clone() },
        FeatureConfig { fft_size: 512, ..base.clone() },
        FeatureConfig { log_floor: 0.0, ..base.clone() },
        FeatureConfig { fmin_hz: 9000.0, ..base.clone() },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    assert!(base.validate().is_ok());
}

#[test]
fn filterbank_rows_are_triangles() {
    let fb = MelFilterbank::new(&FeatureConfig::tts()).unwrap();
    for j in 0..fb.n_mels {
        let row = fb.row(j);
        assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
        let nz: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
        assert!(!nz.is_empty(), "filter {j} is empty");
        // support is contiguous and the weights rise then fall
        assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len());
        let peak = nz.iter().copied().max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert!(nz.windows(2).all(|p| p[1] > peak || row[p[1]] >= row[p[0]]));
        assert!(nz.windows(2).all(|p| p[0] < peak || row[p[1]] <= row[p[0]]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filterbank_covers_the_band(n_mels in 1usize..100, fmin in 0.0f64..2000.0, width in 500.0f64..6000.0) {
        let cfg = FeatureConfig {
            n_mels,
            fmin_hz: fmin,
            fmax_hz: (fmin + width).min(8000.0),
            ..FeatureConfig::tts()
        };
        let fb = MelFilterbank::new(&cfg).unwrap();
        let bin_hz = 16_000.0 / 1024.0;
        for k in 0..fb.bins {
            let hz = k as f64 * bin_hz;
            let s = fb.column_sum(k);
            if hz >= cfg.fmin_hz && hz <= cfg.fmax_hz {
                prop_assert!(s > 0.0);
                prop_assert!((s - 1.0).abs() < 1e-9);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }
    }
}

#[test]
fn features_are_deterministic() {
    let s = signal(&noise(5000, 2));
    let a = log_mel(&s, &FeatureConfig::asr()).unwrap();
    let b = log_mel(&s, &FeatureConfig::asr()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sample_rate_mismatch_is_rejected() {
    let s = AudioSignal::new(vec![0.0; 4000], 22_050).unwrap();
    assert!(matches!(log_mel(&s, &FeatureConfig::tts()), Err(DspError::Config(_))));
}
