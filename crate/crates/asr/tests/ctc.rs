use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use synthasr_asr::{ctc_loss, ctc_loss_and_grad, min_frames, AsrError};
use synthasr_nn::gradcheck::check_input;
use synthasr_nn::{rng, Graph, ParamStore, Tensor};

/// Random `T×V` matrix of normalized log-probabilities.
fn random_log_probs(r: &mut impl Rng, t: usize, v: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t * v);
    for _ in 0..t {
        let z: Vec<f64> = (0..v).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
        let lse = z.iter().map(|x| x.exp()).sum::<f64>().ln();
        out.extend(z.iter().map(|x| x - lse));
    }
    out
}

fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Probability mass of every path of length `t` that collapses to `labels`.
fn brute_force_prob(lp: &[f64], t: usize, v: usize, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut path = vec![0usize; t];
    for code in 0..v.pow(t as u32) {
        let mut c = code;
        for p in path.iter_mut() {
            *p = c % v;
            c /= v;
        }
        if collapse(&path, 0) == labels {
            total += path.iter().enumerate().map(|(i, &k)| lp[i * v + k]).sum::<f64>().exp();
        }
    }
    total
}

#[test]
fn matches_path_enumeration_on_random_cases() {
    let mut r = rng(11);
    let mut feasible = 0;
    for case in 0..200 {
        let t = r.random_range(1..=5);
        let v = r.random_range(2..=4);
        let l = r.random_range(0..=3);
        let labels: Vec<usize> = (0..l).map(|_| r.random_range(1..v)).collect();
        let lp = random_log_probs(&mut r, t, v);
        let brute = brute_force_prob(&lp, t, v, &labels);
        match ctc_loss_and_grad(&lp, t, v, &labels, 0) {
            Ok((loss, _)) => {
                feasible += 1;
                let expect = -brute.ln();
                assert!(
                    (loss - expect).abs() < 1e-6,
                    "case {case}: T={t} V={v} labels={labels:?}: {loss} vs {expect}"
                );
            }
            Err(AsrError::LabelTooLong { .. }) => {
                assert!(t < min_frames(&labels));
                assert_eq!(brute, 0.0, "case {case}: infeasible labeling with mass");
            }
            Err(e) => panic!("case {case}: {e}"),
        }
    }
    assert!(feasible > 120, "only {feasible} feasible cases");
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(12);
    let h = 1e-5;
    for _ in 0..30 {
        let t = r.random_range(1..=6);
        let v = r.random_range(2..=4);
        let labels: Vec<usize> = (0..r.random_range(0..=3)).map(|_| r.random_range(1..v)).collect();
        if t < min_frames(&labels) {
            continue;
        }
        let lp = random_log_probs(&mut r, t, v);
        let (_, grad) = ctc_loss_and_grad(&lp, t, v, &labels, 0).unwrap();
        for i in 0..lp.len() {
            let mut up = lp.clone();
            up[i] += h;
            let mut down = lp.clone();
            down[i] -= h;
            let fd = (ctc_loss_and_grad(&up, t, v, &labels, 0).unwrap().0
                - ctc_loss_and_grad(&down, t, v, &labels, 0).unwrap().0)
                / (2.0 * h);
            let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-3, "entry {i}: analytic {} fd {fd}", grad[i]);
        }
    }
}

#[test]
fn gradient_through_log_softmax_matches_finite_differences() {
    let mut r = rng(13);
    let store = ParamStore::<f64>::new();
    let logits = Tensor::from_fn(5, 4, |_, _| r.sample::<f64, _>(StandardNormal));
    let check = check_input(&store, &logits, 1e-5, |g, x| {
        let lp = g.log_softmax_rows(x);
        ctc_loss(g, lp, &[1, 2, 2], 0).unwrap()
    });
    assert!(check.max_rel_err < 1e-3, "{check:?}");
}

#[test]
fn single_frame_single_label() {
    let lp = [0.3f64.ln(), 0.7f64.ln()];
    let (loss, _) = ctc_loss_and_grad(&lp, 1, 2, &[1], 0).unwrap();
    assert!((loss + 0.7f64.ln()).abs() < 1e-12);
}

#[test]
fn two_frames_single_label() {
    let p1 = [0.2, 0.5, 0.3];
    let p2 = [0.6, 0.1, 0.3];
    let lp: Vec<f64> = p1.iter().chain(&p2).map(|p: &f64| p.ln()).collect();
    let (loss, _) = ctc_loss_and_grad(&lp, 2, 3, &[1], 0).unwrap();
    let expect = -(p1[1] * p2[1] + p1[1] * p2[0] + p1[0] * p2[1]).ln();
    assert!((loss - expect).abs() < 1e-12);
}

#[test]
fn empty_label_is_all_blank() {
    let mut r = rng(3);
    let lp = random_log_probs(&mut r, 4, 3);
    let (loss, grad) = ctc_loss_and_grad(&lp, 4, 3, &[], 0).unwrap();
    let expect: f64 = -(0..4).map(|t| lp[t * 3]).sum::<f64>();
    assert!((loss - expect).abs() < 1e-12);
    for t in 0..4 {
        assert_eq!(grad[t * 3], -1.0);
        assert_eq!(grad[t * 3 + 1], 0.0);
    }
}

#[test]
fn repeats_need_separating_blank() {
    assert_eq!(min_frames(&[1, 1]), 3);
    assert_eq!(min_frames(&[1, 2, 2, 2]), 6);
    let lp = vec![(0.5f64).ln(); 4];
    match ctc_loss_and_grad(&lp, 2, 2, &[1, 1], 0) {
        Err(AsrError::LabelTooLong {
            labels: 2,
            required: 3,
            frames: 2,
        }) => {}
        other => panic!("{other:?}"),
    }
    assert!(ctc_loss_and_grad(&lp, 2, 2, &[1], 0).is_ok());
}

#[test]
fn rejects_bad_labels_and_shapes() {
    let lp = vec![(0.5f64).ln(); 4];
    assert!(matches!(
        ctc_loss_and_grad(&lp, 2, 2, &[2], 0),
        Err(AsrError::UnknownLabel { id: 2, .. })
    ));
    assert!(matches!(
        ctc_loss_and_grad(&lp, 2, 2, &[0], 0),
        Err(AsrError::UnknownLabel { id: 0, .. })
    ));
    assert!(matches!(ctc_loss_and_grad(&lp, 3, 2, &[1], 0), Err(AsrError::Shape(_))));
}

#[test]
fn graph_node_carries_loss_value() {
    let mut r = rng(4);
    let lp = random_log_probs(&mut r, 3, 3);
    let t = Tensor::new(3, 3, lp.clone());
    let store = ParamStore::<f64>::new();
    let mut g = Graph::with_params(&store, false, 0);
    let x = g.input(t);
    let l = ctc_loss(&mut g, x, &[2], 0).unwrap();
    let (expect, _) = ctc_loss_and_grad(&lp, 3, 3, &[2], 0).unwrap();
    assert_eq!(g.scalar(l), expect);
}

proptest! {
    #[test]
    fn loss_is_non_negative_and_gradient_sums_to_minus_one_per_frame(
        seed in 0u64..10_000,
        t in 1usize..8,
        v in 2usize..6,
        len in 0usize..4,
    ) {
        let mut r = rng(seed);
        let labels: Vec<usize> = (0..len).map(|_| r.random_range(1..v)).collect();
        prop_assume!(t >= min_frames(&labels));
        let lp = random_log_probs(&mut r, t, v);
        let (loss, grad) = ctc_loss_and_grad(&lp, t, v, &labels, 0).unwrap();
        prop_assert!(loss >= -1e-12);
        for row in grad.chunks(v) {
            let s: f64 = row.iter().sum();
            prop_assert!((s + 1.0).abs() < 1e-9);
        }
    }
}
