use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use synthasr_eval::{bootstrap_ci, mean, mos::summarize, EvalError};
use synthasr_nn::rng;

#[test]
fn constant_scores_give_degenerate_interval() {
    assert_eq!(bootstrap_ci(&[3.0; 20], 0.95, 1000, 1).unwrap(), (3.0, 3.0));
    assert_eq!(bootstrap_ci(&[0.1; 7], 0.95, 100, 1).unwrap(), (0.1, 0.1));
}

#[test]
fn rejects_bad_arguments() {
    assert!(matches!(bootstrap_ci(&[], 0.95, 10, 0), Err(EvalError::EmptyScores)));
    assert!(matches!(bootstrap_ci(&[1.0], 1.0, 10, 0), Err(EvalError::Level(_))));
    assert!(matches!(bootstrap_ci(&[1.0], 0.0, 10, 0), Err(EvalError::Level(_))));
    assert!(bootstrap_ci(&[1.0, f64::NAN], 0.9, 10, 0).is_err());
    assert!(bootstrap_ci(&[1.0, 2.0], 0.9, 0, 0).is_err());
}

#[test]
fn interval_covers_true_mean_in_most_trials() {
    let mut covered = 0;
    for trial in 0..200u64 {
        let mut r = rng(10_000 + trial);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut r)).collect();
        let (lo, hi) = bootstrap_ci(&xs, 0.95, 1000, trial).unwrap();
        assert!(lo <= mean(&xs) && mean(&xs) <= hi);
        if lo <= 0.0 && 0.0 <= hi {
            covered += 1;
        }
    }
    assert!(covered >= 180, "coverage {covered}/200");
}

#[test]
fn wider_level_gives_wider_interval() {
    let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
    let (a, b) = bootstrap_ci(&xs, 0.5, 2000, 3).unwrap();
    let (c, d) = bootstrap_ci(&xs, 0.99, 2000, 3).unwrap();
    assert!(c <= a && b <= d && a < b);
}

#[test]
fn mos_summaries() {
    let s = summarize(&[3.0, 3.0, 3.0], 0.95, 1000, 0).unwrap();
    assert_eq!((s.mean, s.ci), (3.0, (3.0, 3.0)));
    let s = summarize(&[2.0, 3.0, 4.0], 0.95, 1000, 0).unwrap();
    assert_eq!(s.mean, 3.0);
    assert!(s.ci.0 >= 2.0 && s.ci.1 <= 4.0 && s.ci.0 < 3.0 && s.ci.1 > 3.0);
}

proptest! {
    #[test]
    fn invariant_under_input_permutation(
        xs in prop::collection::vec(-100.0f64..100.0, 1..60),
        seed in 0u64..1000,
        shuffle in 0u64..1000,
    ) {
        let mut ys = xs.clone();
        ys.shuffle(&mut rng(shuffle));
        prop_assert_eq!(bootstrap_ci(&xs, 0.95, 200, seed).unwrap(), bootstrap_ci(&ys, 0.95, 200, seed).unwrap());
    }

    #[test]
    fn interval_is_ordered_and_inside_range(xs in prop::collection::vec(-10.0f64..10.0, 1..40), seed in 0u64..100) {
        let (lo, hi) = bootstrap_ci(&xs, 0.9, 300, seed).unwrap();
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= lo + 1e-12 && lo <= hi && hi <= max + 1e-12);
    }
}
