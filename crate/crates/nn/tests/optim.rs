use synthasr_nn::{
    Graph, NnError, Optimizer, OptimizerConfig, ParamGrads, ParamStore, Tensor,
};

fn scalar_store(w: f32) -> ParamStore<f32> {
    let mut s = ParamStore::new();
    s.add("w", Tensor::scalar(w)).unwrap();
    s
}

fn grads_of(store: &ParamStore<f32>, g: f32) -> ParamGrads<f32> {
    let mut out = ParamGrads::zeros(store);
    out.accumulate(store.id("w").unwrap(), &[g]);
    out
}

#[test]
fn zero_gradient_leaves_parameters_unchanged() {
    for cfg in [OptimizerConfig::adam(), OptimizerConfig { weight_decay: 0.0, ..OptimizerConfig::adamw() }] {
        let mut store = scalar_store(0.7);
        let mut opt = Optimizer::new(cfg, &store).unwrap();
        let g = grads_of(&store, 0.0);
        for _ in 0..3 {
            opt.step(&mut store, &g, 0.1).unwrap();
        }
        assert_eq!(store.get(store.id("w").unwrap()).data(), &[0.7]);
    }
}

#[test]
fn first_adam_step_moves_by_lr() {
    // m = 0.1, v = 0.001; bias-corrected both are 1 → w − lr·1/(1+eps)
    let mut store = scalar_store(1.0);
    let mut opt = Optimizer::new(OptimizerConfig::adam(), &store).unwrap();
    let g = grads_of(&store, 1.0);
    opt.step(&mut store, &g, 0.1).unwrap();
    let w = store.get(store.id("w").unwrap()).data()[0];
    let expected = 1.0 - 0.1 / (1.0 + 1e-8);
    assert!((w as f64 - expected).abs() < 1e-6, "{w}");
}

#[test]
fn adamw_with_zero_lr_is_frozen() {
    let mut store = scalar_store(2.5);
    let mut opt = Optimizer::new(OptimizerConfig::adamw(), &store).unwrap();
    let g = grads_of(&store, 0.0);
    opt.step(&mut store, &g, 0.0).unwrap();
    assert_eq!(store.get(store.id("w").unwrap()).data(), &[2.5]);
}

#[test]
fn adamw_decay_is_decoupled() {
    let mut store = scalar_store(2.0);
    let cfg = OptimizerConfig {
        weight_decay: 0.1,
        ..OptimizerConfig::adamw()
    };
    let mut opt = Optimizer::new(cfg, &store).unwrap();
    let g = grads_of(&store, 0.0);
    opt.step(&mut store, &g, 0.5).unwrap();
    // pure decay: w(1 − lr·wd)
    let w = store.get(store.id("w").unwrap()).data()[0];
    assert!((w - 1.9).abs() < 1e-6);
}

#[test]
fn nan_gradient_names_the_parameter() {
    let mut store = ParamStore::<f32>::new();
    store.add("encoder.w", Tensor::zeros(1, 2)).unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::adam(), &store).unwrap();
    let mut g = ParamGrads::zeros(&store);
    g.accumulate(store.id("encoder.w").unwrap(), &[0.0, f32::NAN]);
    match opt.step(&mut store, &g, 0.1) {
        Err(NnError::NonFiniteGradient(name)) => assert_eq!(name, "encoder.w"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_betas_rejected() {
    let store = scalar_store(0.0);
    let cfg = OptimizerConfig {
        beta1: 1.0,
        ..OptimizerConfig::adam()
    };
    assert!(Optimizer::new(cfg, &store).is_err());
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut store = ParamStore::<f32>::new();
    let id = store.add("w", Tensor::new(1, 3, vec![3.0, -2.0, 1.0])).unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::adam(), &store).unwrap();
    for _ in 0..500 {
        let grads = {
            let mut g = Graph::with_params(&store, true, 0);
            let w = g.param(id);
            let l = g.square(w);
            let l = g.sum(l);
            g.backward(l).unwrap().into_param_grads(&store)
        };
        opt.step(&mut store, &grads, 0.05).unwrap();
    }
    assert!(store.get(id).data().iter().all(|v| v.abs() < 1e-2));
}
