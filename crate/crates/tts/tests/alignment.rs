use proptest::prelude::*;
use rand::Rng;
use synthasr_nn::{Graph, Tensor};
use synthasr_tts::mas::{gaussian_loglik, mas_align};
use synthasr_tts::upsample::{durations_from_log, frame_to_phoneme, round_durations, upsample};
use synthasr_tts::{vocab_hash, DurationArchive, TtsError};

/// Every split of `t` frames into `n` non-empty consecutive segments.
fn compositions(n: usize, t: usize) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![t as u32]];
    }
    let mut out = Vec::new();
    for first in 1..=t - (n - 1) {
        for mut rest in compositions(n - 1, t - first) {
            rest.insert(0, first as u32);
            out.push(rest);
        }
    }
    out
}

fn score(l: &Tensor<f64>, d: &[u32]) -> f64 {
    let mut j = 0;
    let mut s = 0.0;
    for (i, &k) in d.iter().enumerate() {
        for _ in 0..k {
            s += l.get(i, j);
            j += 1;
        }
    }
    s
}

/// Exhaustive search; ties go to the longest last segment, then the
/// second-to-last, and so on.
fn brute_force(l: &Tensor<f64>) -> Vec<u32> {
    let (n, t) = l.shape();
    let mut best: Option<(f64, Vec<u32>)> = None;
    for d in compositions(n, t) {
        let s = score(l, &d);
        let better = match &best {
            None => true,
            Some((bs, bd)) => {
                s > *bs || (s == *bs && d.iter().rev().cmp(bd.iter().rev()).is_gt())
            }
        };
        if better {
            best = Some((s, d));
        }
    }
    best.unwrap().1
}

#[test]
fn brute_force_enumerates_binomial_count() {
    assert_eq!(compositions(3, 6).len(), 10);
}

#[test]
fn mas_matches_exhaustive_search_on_random_matrices() {
    let mut rng = synthasr_nn::rng(7);
    for _ in 0..100 {
        let n = rng.random_range(1..=4);
        let t = rng.random_range(n..=8);
        let l = Tensor::from_fn(n, t, |_, _| rng.random_range(-5.0..0.0));
        assert_eq!(mas_align(&l).unwrap(), brute_force(&l), "{l:?}");
    }
}

#[test]
fn mas_tie_breaking_matches_documented_rule() {
    let mut rng = synthasr_nn::rng(11);
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let t = rng.random_range(n..=8);
        let l = Tensor::from_fn(n, t, |_, _| rng.random_range(0..2) as f64);
        assert_eq!(mas_align(&l).unwrap(), brute_force(&l), "{l:?}");
    }
    let flat = Tensor::zeros(3, 6);
    assert_eq!(mas_align(&flat).unwrap(), vec![1, 1, 4]);
}

#[test]
fn mas_edge_cases() {
    let l = Tensor::from_fn(1, 5, |_, j| -(j as f64));
    assert_eq!(mas_align(&l).unwrap(), vec![5]);
    let l = Tensor::from_fn(4, 4, |i, j| (i * j) as f64);
    assert_eq!(mas_align(&l).unwrap(), vec![1, 1, 1, 1]);
    assert!(matches!(
        mas_align(&Tensor::zeros(5, 3)),
        Err(TtsError::TooFewFrames { phonemes: 5, frames: 3 })
    ));
}

#[test]
fn gaussian_loglik_prefers_the_nearest_mean() {
    let means = Tensor::from_rows(&[vec![0.0f32, 0.0], vec![3.0, 3.0]]);
    let frames = Tensor::from_rows(&[vec![0.1f32, 0.0], vec![0.0, -0.2], vec![2.9, 3.1]]);
    let l = gaussian_loglik(&means, &frames).unwrap();
    assert!((l.get(0, 0) + 0.005).abs() < 1e-7);
    assert_eq!(mas_align(&l).unwrap(), vec![2, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn mas_durations_are_complete(n in 1usize..5, extra in 0usize..6, seed in 0u64..1000) {
        let t = n + extra;
        let mut rng = synthasr_nn::rng(seed);
        let l = Tensor::from_fn(n, t, |_, _| rng.random_range(-3.0..3.0));
        let d = mas_align(&l).unwrap();
        prop_assert_eq!(d.len(), n);
        prop_assert!(d.iter().all(|&x| x >= 1));
        prop_assert_eq!(d.iter().sum::<u32>() as usize, t);
    }

    #[test]
    fn upsample_length_is_sum_of_durations(d in proptest::collection::vec(0u32..5, 1..8)) {
        prop_assume!(d.iter().any(|&x| x > 0));
        let n = d.len();
        let mut g = Graph::<f32>::new(false, 0);
        let h = g.constant(Tensor::from_fn(n, 3, |i, j| (i * 10 + j) as f32));
        let up = upsample(&mut g, h, &d).unwrap();
        let total: u32 = d.iter().sum();
        prop_assert_eq!(g.shape(up).0, total as usize);
        // prefix-sum oracle: frame t belongs to the first n with cumsum[n] > t
        let mut cum = Vec::new();
        let mut acc = 0;
        for &x in &d {
            acc += x;
            cum.push(acc);
        }
        let map = frame_to_phoneme(&d);
        for t in 0..total {
            let owner = cum.iter().position(|&c| c > t).unwrap();
            prop_assert_eq!(map[t as usize], owner);
            prop_assert_eq!(g.value(up).row(t as usize), g.value(h).row(owner));
        }
    }
}

#[test]
fn upsample_examples() {
    let mut g = Graph::<f32>::new(false, 0);
    let h = g.constant(Tensor::from_rows(&[vec![1.0f32], vec![2.0], vec![3.0]]));
    let up = upsample(&mut g, h, &[1, 2, 0]).unwrap();
    assert_eq!(g.value(up).data(), &[1.0, 2.0, 2.0]);
    let id = upsample(&mut g, h, &[1, 1, 1]).unwrap();
    assert_eq!(g.value(id), g.value(h));
    assert!(matches!(upsample(&mut g, h, &[0, 0, 0]), Err(TtsError::ZeroDuration)));
    assert!(matches!(upsample(&mut g, h, &[1, 1]), Err(TtsError::Shape(_))));
}

#[test]
fn rounding_rule() {
    let log = [(2.4f32).ln(), (1.4f32).ln()];
    assert_eq!(durations_from_log(&log).unwrap(), vec![1, 0]);
    assert_eq!(round_durations(&[0.5, 1.5, 2.49, -3.0]).unwrap(), vec![1, 2, 2, 0]);
    assert!(matches!(round_durations(&[0.2, -1.0]), Err(TtsError::ZeroDuration)));
    assert!(matches!(round_durations(&[f64::NAN]), Err(TtsError::NonFinite(_))));
}

#[test]
fn archive_round_trip_and_corruption() {
    let symbols: Vec<String> = ["sil", "a", "a#"].iter().map(|s| s.to_string()).collect();
    let mut a = DurationArchive::new(vocab_hash(&symbols));
    a.insert("spk0_utt1", vec![3, 1, 4, 1, 5]);
    a.insert("spk1_utt0", vec![9, 2]);
    let bytes = a.to_bytes();
    assert_eq!(DurationArchive::from_bytes(&bytes).unwrap(), a);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("durations.bin");
    a.save(&path).unwrap();
    let b = DurationArchive::load(&path).unwrap();
    assert_eq!(b.get("spk0_utt1"), Some(&[3, 1, 4, 1, 5][..]));
    assert_eq!(b.len(), 2);

    assert!(DurationArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(DurationArchive::from_bytes(&extra).is_err());
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(DurationArchive::from_bytes(&magic).is_err());
    assert_ne!(vocab_hash(&symbols), vocab_hash(&symbols[..2]));
}
