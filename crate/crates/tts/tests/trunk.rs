use synthasr_nn::layers::Mask;
use synthasr_nn::{rng, Builder, Graph, ParamStore, Tensor};
use synthasr_tts::{duration_loss, PhonemeSequence, Trunk, TrunkConfig, TtsError};

fn trunk(config: &TrunkConfig) -> (ParamStore<f32>, Trunk) {
    let mut store = ParamStore::new();
    let mut r = rng(3);
    let t = Trunk::new(&mut Builder::new(&mut store, &mut r).sub("trunk"), config);
    (store, t)
}

#[test]
fn encoder_output_shape_and_vocab_checks() {
    let cfg = TrunkConfig::toy(10, 2);
    let (store, t) = trunk(&cfg);
    let mut g = Graph::eval(&store);
    let h = t.encode(&mut g, &[1, 2, 3, 4], &Mask::all(4)).unwrap();
    assert_eq!(g.shape(h), (4, cfg.dim));
    assert!(g.value(h).is_finite());
    assert!(matches!(
        t.encode(&mut g, &[1, 10], &Mask::all(2)),
        Err(TtsError::UnknownPhoneme { id: 10, size: 10 })
    ));
    assert!(matches!(t.encode(&mut g, &[], &Mask::all(0)), Err(TtsError::EmptySequence)));
    assert!(matches!(t.speaker(&mut g, 2), Err(TtsError::UnknownSpeaker { .. })));
    assert!(PhonemeSequence::new(vec![], 10).is_err());
    assert!(PhonemeSequence::new(vec![3, 11], 10).is_err());
}

#[test]
fn full_scale_encoder_width() {
    let cfg = TrunkConfig::full(8, 1);
    assert_eq!((cfg.dim, cfg.layers, cfg.prenet_layers, cfg.prenet_kernel), (256, 6, 3, 5));
    assert_eq!((cfg.duration_channels, cfg.duration_kernel, cfg.speaker_dim), (384, 3, 256));
    let cfg = TrunkConfig {
        layers: 1,
        ..cfg
    };
    let (store, t) = trunk(&cfg);
    let mut g = Graph::eval(&store);
    let h = t.encode(&mut g, &[1, 2, 3], &Mask::all(3)).unwrap();
    assert_eq!(g.shape(h), (3, 256));
}

#[test]
fn batched_encoding_matches_single_runs() {
    let cfg = TrunkConfig::toy(12, 1);
    let (store, t) = trunk(&cfg);
    let a: &[usize] = &[1, 5, 7];
    let b: &[usize] = &[2, 3, 4, 9, 11, 6];
    let mut g = Graph::eval(&store);
    let batch = t.encode_batch(&mut g, &[a, b]).unwrap();
    for (ids, hb) in [a, b].iter().zip(batch) {
        let hs = t.encode(&mut g, ids, &Mask::all(ids.len())).unwrap();
        let diff = g.value(hs).max_abs_diff(g.value(hb));
        assert!(diff < 1e-5, "batched vs single: {diff}");
    }
}

#[test]
fn duration_loss_uses_log_of_d_plus_one() {
    let mut g = Graph::<f32>::new(false, 0);
    let ln2 = 2f32.ln();
    let pred = g.constant(Tensor::new(2, 1, vec![ln2, ln2]));
    let mask = Mask::all(2);
    let l = duration_loss(&mut g, pred, &[1, 3], &mask).unwrap();
    let expected = ((2f64.ln() - 4f64.ln()).abs()) / 2.0;
    assert!((g.scalar(l) as f64 - expected).abs() < 1e-6);
    let exact = g.constant(Tensor::new(2, 1, vec![ln2, 4f32.ln()]));
    let zero = duration_loss(&mut g, exact, &[1, 3], &mask).unwrap();
    assert_eq!(g.scalar(zero), 0.0);
    assert!(duration_loss(&mut g, pred, &[1], &mask).is_err());
}

#[test]
fn duration_loss_does_not_reach_the_encoder() {
    let cfg = TrunkConfig::toy(10, 2);
    let (store, t) = trunk(&cfg);
    let mut g = Graph::with_params(&store, true, 1);
    let mask = Mask::all(4);
    let h = t.encode(&mut g, &[1, 2, 3, 4], &mask).unwrap();
    let spk = t.speaker(&mut g, 1).unwrap();
    let pred = t.predict_log_durations(&mut g, h, spk, &mask);
    let loss = duration_loss(&mut g, pred, &[2, 0, 5, 1], &mask).unwrap();
    let grads = g.backward(loss).unwrap().into_param_grads(&store);
    let mut predictor_touched = false;
    for (id, p) in store.iter() {
        let norm: f32 = grads.get(id).iter().map(|x| x.abs()).sum();
        let encoder = ["trunk.embed", "trunk.prenet", "trunk.encoder"]
            .iter()
            .any(|prefix| p.name.starts_with(prefix));
        if encoder {
            assert_eq!(norm, 0.0, "{} received gradient", p.name);
        }
        if p.name.starts_with("trunk.duration") && norm > 0.0 {
            predictor_touched = true;
        }
        if p.name.starts_with("trunk.speakers") {
            assert!(norm > 0.0, "speaker embedding is an input of the predictor");
        }
    }
    assert!(predictor_touched);
}

#[test]
fn untrained_predictor_starts_at_the_configured_bias() {
    let cfg = TrunkConfig {
        duration_bias: 1.5,
        ..TrunkConfig::toy(10, 1)
    };
    let mut store = ParamStore::<f32>::new();
    let mut r = rng(0);
    let t = Trunk::new(&mut Builder::new(&mut store, &mut r), &cfg);
    let id = store.id("duration_out.bias").unwrap();
    assert_eq!(store.get(id).data(), &[1.5]);
    let mut g = Graph::eval(&store);
    let h = t.encode(&mut g, &[1, 2], &Mask::all(2)).unwrap();
    let s = t.speaker(&mut g, 0).unwrap();
    let p = t.predict_log_durations(&mut g, h, s, &Mask::all(2));
    assert_eq!(g.shape(p), (2, 1));
}
