use proptest::prelude::*;
use viewsynth::tensor::{Init, NormMode, Tensor};
use viewsynth::viewnet::{
    checkpoint, load_checkpoint, model_grad_check, save_checkpoint, AngleQuery, ViewNet,
    ViewNetConfig,
};
use viewsynth::{CheckpointError, Error};

fn input(cfg: &ViewNetConfig, seed: u64) -> Tensor<f32> {
    Tensor::new(
        &[cfg.input_channels, cfg.input_size, cfg.input_size],
        Init::Uniform {
            low: 0.0,
            high: 1.0,
            seed,
        },
    )
    .unwrap()
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn build_is_deterministic_per_seed() {
    let a = ViewNet::<f32>::build(ViewNetConfig::micro(), 42).unwrap();
    let b = ViewNet::<f32>::build(ViewNetConfig::micro(), 42).unwrap();
    let c = ViewNet::<f32>::build(ViewNetConfig::micro(), 43).unwrap();
    for (name, t) in a.params() {
        assert_eq!(bits(t), bits(&b.params()[name]), "{name}");
    }
    assert_ne!(a, c);
}

#[test]
fn init_follows_xavier_bounds_and_constants() {
    let cfg = ViewNetConfig::default();
    let net = ViewNet::<f32>::build(cfg.clone(), 1).unwrap();
    for (name, t) in net.params() {
        let shape = t.shape();
        if name.ends_with(".w") {
            let (fan_in, fan_out) = if shape.len() == 4 {
                (shape[1] * 9, shape[0] * 9)
            } else {
                (shape[1], shape[0])
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
        } else if name.ends_with(".b") || name.ends_with(".beta") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        } else if name.ends_with(".gamma") || name.starts_with("skip") {
            assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
        }
    }
    assert_eq!(net.skip_weights(), vec![1.0; 4]);
}

#[test]
fn three_by_three_fc_weights_stay_within_unit_bound() {
    // fan_in = fan_out = 3 gives bound sqrt(6/6) = 1
    let mut cfg = ViewNetConfig::micro();
    cfg.fc_widths = vec![3, 3];
    let net = ViewNet::<f64>::build(cfg, 9).unwrap();
    let w = &net.params()["fc1.w"];
    assert_eq!(w.shape(), &[3, 3]);
    assert!(w.data().iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = ViewNetConfig::micro();
    cfg.skip_weights = vec![1.0];
    assert!(matches!(
        ViewNet::<f32>::build(cfg, 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn micro_forward_shapes_and_range() {
    let cfg = ViewNetConfig::micro();
    let mut net = ViewNet::<f32>::build(cfg.clone(), 5).unwrap();
    let out = net
        .forward(
            &input(&cfg, 1),
            &[AngleQuery::new(30.0, 10.0)],
            NormMode::Eval,
        )
        .unwrap();
    assert_eq!(out.rgb.shape(), &[3, 16, 16]);
    assert_eq!(out.depth.shape(), &[1, 16, 16]);
    for v in out.rgb.data().iter().chain(out.depth.data()) {
        assert!((0.0..=1.0).contains(v));
    }
    let batch = Tensor::stack(&[&input(&cfg, 1), &input(&cfg, 2)]).unwrap();
    let q = [AngleQuery::new(0.0, 0.0), AngleQuery::new(90.0, 0.0)];
    let out = net.forward(&batch, &q, NormMode::Train).unwrap();
    assert_eq!(out.rgb.shape(), &[2, 3, 16, 16]);
    assert_eq!(out.depth.shape(), &[2, 1, 16, 16]);
}

#[test]
fn forward_rejects_wrong_size() {
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 5).unwrap();
    let bad = Tensor::zeros(&[4, 32, 32]).unwrap();
    assert!(matches!(
        net.generate(&bad, &[AngleQuery::new(0.0, 0.0)]),
        Err(Error::InvalidShape(_))
    ));
    let ok = Tensor::zeros(&[4, 16, 16]).unwrap();
    assert!(matches!(
        net.generate(&ok, &[]),
        Err(Error::InvalidShape(_))
    ));
}

#[test]
fn eval_is_deterministic_and_periodic_in_yaw() {
    let cfg = ViewNetConfig::micro();
    let net = ViewNet::<f32>::build(cfg.clone(), 8).unwrap();
    let x = input(&cfg, 3);
    let a = net.generate(&x, &[AngleQuery::new(0.0, 0.0)]).unwrap();
    let b = net.generate(&x, &[AngleQuery::new(0.0, 0.0)]).unwrap();
    let c = net.generate(&x, &[AngleQuery::new(360.0, 0.0)]).unwrap();
    assert_eq!(bits(&a.rgb), bits(&b.rgb));
    assert_eq!(bits(&a.rgb), bits(&c.rgb));
    assert_eq!(bits(&a.depth), bits(&c.depth));
}

#[test]
fn zero_skip_weights_keep_the_output_contract() {
    let cfg = ViewNetConfig::micro();
    let mut net = ViewNet::<f32>::build(cfg.clone(), 8).unwrap();
    let with = net
        .generate(&input(&cfg, 3), &[AngleQuery::new(48.0, 0.0)])
        .unwrap();
    net.set_skip_weights(&[0.0, 0.0]).unwrap();
    let without = net
        .generate(&input(&cfg, 3), &[AngleQuery::new(48.0, 0.0)])
        .unwrap();
    assert_eq!(with.rgb.shape(), without.rgb.shape());
    assert_ne!(with.rgb, without.rgb);
    assert!(without.depth.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn train_mode_updates_running_statistics() {
    let cfg = ViewNetConfig::micro();
    let mut net = ViewNet::<f32>::build(cfg.clone(), 8).unwrap();
    let before = net.norm_states().clone();
    let batch = Tensor::stack(&[&input(&cfg, 1), &input(&cfg, 2)]).unwrap();
    let q = [AngleQuery::new(0.0, 0.0); 2];
    net.forward(&batch, &q, NormMode::Eval).unwrap();
    assert_eq!(&before, net.norm_states());
    net.forward(&batch, &q, NormMode::Train).unwrap();
    assert_ne!(&before, net.norm_states());
}

#[test]
fn micro_model_gradients_match_finite_differences() {
    let rep = model_grad_check(&ViewNetConfig::micro(), 1, 1e-5).unwrap();
    assert!(rep.coordinates > 1000);
    assert!(
        rep.max_rel_error <= 1e-3,
        "max rel error {} at {}",
        rep.max_rel_error,
        rep.worst_param
    );
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.vfck");
    let cfg = ViewNetConfig::micro();
    let mut net = ViewNet::<f32>::build(cfg.clone(), 2).unwrap();
    let batch = Tensor::stack(&[&input(&cfg, 1), &input(&cfg, 2)]).unwrap();
    net.forward(&batch, &[AngleQuery::new(12.0, 0.0); 2], NormMode::Train)
        .unwrap();
    save_checkpoint(&net, &path).unwrap();
    let back: ViewNet<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(back, net);
    let q = [AngleQuery::new(100.0, 20.0)];
    let a = net.generate(&input(&cfg, 4), &q).unwrap();
    let b = back.generate(&input(&cfg, 4), &q).unwrap();
    assert_eq!(bits(&a.rgb), bits(&b.rgb));
    assert_eq!(bits(&a.depth), bits(&b.depth));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
    assert!(matches!(
        load_checkpoint::<f32>(&path),
        Err(Error::Checkpoint(CheckpointError::Truncated))
    ));
    let mut wrong = bytes.clone();
    wrong[..4].copy_from_slice(b"PNG\0");
    assert!(matches!(
        checkpoint::from_bytes::<f32>(&wrong),
        Err(Error::Checkpoint(CheckpointError::BadMagic))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn outputs_stay_in_unit_interval(seed in 0u64..1000, yaw in -720.0f64..720.0, pitch in -45.0f64..45.0) {
        let cfg = ViewNetConfig::micro();
        let mut net = ViewNet::<f32>::build(cfg.clone(), seed).unwrap();
        // exaggerate weights to push activations into saturation
        for (_, t) in net.params_mut().iter_mut() {
            for v in t.data_mut() { *v *= 4.0; }
        }
        let out = net.generate(&input(&cfg, seed + 1), &[AngleQuery::new(yaw, pitch)]).unwrap();
        for v in out.rgb.data().iter().chain(out.depth.data()) {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_identity(seed in 0u64..1000) {
        let net = ViewNet::<f32>::build(ViewNetConfig::micro(), seed).unwrap();
        let back: ViewNet<f32> = checkpoint::from_bytes(&checkpoint::to_bytes(&net)).unwrap();
        prop_assert_eq!(back, net);
    }
}
