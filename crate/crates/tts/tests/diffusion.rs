use synthasr_nn::{rng, Builder, Graph, ParamStore, Tensor};
use synthasr_tts::decoders::{reverse_diffusion, score_from_prediction, ScoreUNet, UNetParams};
use synthasr_tts::{NoiseSchedule, SamplingConfig, TtsError};

/// Closed-form 1-D toy: data `X_0 ~ N(m0, s0²)`, prior mean `mu`. The
/// forward marginal at time t is `N(α·m0 + (1−α)·mu, α²·s0² + σ²)`, so with
/// the exact score each reverse step is affine, `X ← A·X + B`.
struct Toy {
    m0: f64,
    s0: f64,
    mu: f64,
    schedule: NoiseSchedule,
}

impl Toy {
    fn marginal(&self, t: f64) -> (f64, f64) {
        let a = self.schedule.alpha(t);
        (a * self.m0 + (1.0 - a) * self.mu, a * a * self.s0 * self.s0 + self.schedule.variance(t))
    }

    fn score(&self, x: f64, t: f64) -> f64 {
        let (m, v) = self.marginal(t);
        -(x - m) / v
    }

    /// Mean and variance after all steps starting from `N(mu, tau)`.
    fn reverse_moments(&self, steps: usize, tau: f64) -> (f64, f64) {
        let h = 1.0 / steps as f64;
        let (mut mean, mut var) = (self.mu, tau);
        for i in (1..=steps).rev() {
            let t = NoiseSchedule::step_time(i, steps);
            let k = 0.5 * h * self.schedule.beta(t);
            let (m, v) = self.marginal(t);
            let a = 1.0 + k - k / v;
            let b = -k * self.mu + k * m / v;
            mean = a * mean + b;
            var *= a * a;
        }
        (mean, var)
    }
}

#[test]
fn sampler_matches_closed_form_reverse_mean() {
    let toy = Toy {
        m0: 1.5,
        s0: 0.4,
        mu: -0.5,
        schedule: NoiseSchedule::default(),
    };
    let steps = 10;
    let tau = 0.7;
    let n = 10_000;
    let mut r = rng(42);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let out = reverse_diffusion(&[toy.mu], &toy.schedule, steps, tau, &mut r, |x, t| {
            Ok(vec![toy.score(x[0], t)])
        })
        .unwrap();
        samples.push(out[0]);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (m, v) = toy.reverse_moments(steps, tau);
    assert!((mean - m).abs() < 3.0 * se, "sample mean {mean}, closed form {m}, se {se}");
    assert!((var / v - 1.0).abs() < 0.05, "sample var {var}, closed form {v}");
}

#[test]
fn zero_schedule_freezes_the_initial_sample() {
    let schedule = NoiseSchedule {
        beta_min: 0.0,
        beta_max: 0.0,
    };
    let mu = [0.3, -1.0, 2.0];
    let out = reverse_diffusion(&mu, &schedule, 7, 0.7, &mut rng(5), |x, _| Ok(vec![1e3; x.len()])).unwrap();
    let mut r = rng(5);
    let init = reverse_diffusion(&mu, &schedule, 1, 0.7, &mut r, |x, _| Ok(vec![0.0; x.len()])).unwrap();
    assert_eq!(out, init);
    assert_ne!(out, mu.to_vec());
}

#[test]
fn zero_steps_is_an_error() {
    let r = reverse_diffusion(&[0.0], &NoiseSchedule::default(), 0, 0.7, &mut rng(0), |x, _| Ok(x.to_vec()));
    assert!(matches!(r, Err(TtsError::Config(_))));
    let bad = SamplingConfig {
        diffusion_steps: 0,
        ..SamplingConfig::default()
    };
    assert!(bad.validate().is_err());
    assert_eq!(SamplingConfig::default().temperature, 0.7);
}

#[test]
fn schedule_matches_linear_beta() {
    let s = NoiseSchedule::default();
    assert_eq!((s.beta(0.0), s.beta(1.0)), (0.05, 20.0));
    // ∫_0^1 β = (0.05 + 20) / 2
    assert!((s.integral(1.0) - 10.025).abs() < 1e-12);
    assert!((s.alpha(0.3).powi(2) + s.variance(0.3) - 1.0).abs() < 1e-12);
    assert_eq!(NoiseSchedule::step_time(1, 4), 0.125);
}

#[test]
fn exact_prediction_recovers_the_exact_score() {
    // For a point mass at x0 the score is −(x − α·x0 − (1−α)·mu)/σ².
    let s = NoiseSchedule::default();
    let (x0, mu, x, t) = (0.8, 0.1, 0.5, 0.4);
    let exact = -(x - s.alpha(t) * x0 - (1.0 - s.alpha(t)) * mu) / s.variance(t);
    assert!((score_from_prediction(&s, t, x, mu, x0 - mu) - exact).abs() < 1e-12);
}

#[test]
fn unet_shapes_and_padding() {
    let p = UNetParams {
        n_mels: 8,
        channels: 4,
        mults: vec![1, 2, 2],
        cond_dim: 6,
        speaker_dim: 3,
    };
    let mut store = ParamStore::<f32>::new();
    let mut r = rng(0);
    let net = ScoreUNet::new(&mut Builder::new(&mut store, &mut r), &p);
    assert_eq!(net.frame_multiple(), 4);
    // make the zero-initialized output layer non-trivial
    for (id, name) in store.iter().map(|(id, p)| (id, p.name.clone())).collect::<Vec<_>>() {
        if name.starts_with("output") {
            for (k, v) in store.get_mut(id).data_mut().iter_mut().enumerate() {
                *v = 0.1 * (k as f32 + 1.0);
            }
        }
    }
    let mut g = Graph::eval(&store);
    let x = g.constant(Tensor::from_fn(12, 8, |i, j| ((i * 8 + j) as f32 * 0.37).sin()));
    let mu = g.constant(Tensor::from_fn(12, 8, |i, j| ((i + j) as f32 * 0.1).cos()));
    let spk = g.constant(Tensor::from_fn(1, 3, |_, j| j as f32));
    let y = net.forward(&mut g, x, mu, 0.5, spk, 10).unwrap();
    assert_eq!(g.shape(y), (12, 8));
    let v = g.value(y);
    assert!(v.is_finite());
    assert!((10..12).all(|r| v.row(r).iter().all(|&a| a == 0.0)));
    assert!(v.row(0).iter().any(|&a| a != 0.0));
    let odd = g.constant(Tensor::zeros(10, 8));
    assert!(net.forward(&mut g, odd, odd, 0.5, spk, 10).is_err());
}
