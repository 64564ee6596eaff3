use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viewsynth::eval::image_error;
use viewsynth::render::{CameraPose, ClassViews, GridSpec, ShapeClass};
use viewsynth::tensor::Tensor;
use viewsynth::train::{
    adam_step, clip_gradients, sample_pair_indices, sample_pairs, train, AdamConfig, AdamState,
    TrainConfig, CHECKPOINT_DIR, CONFIG_FILE, FINAL_CHECKPOINT, LAST_GOOD_CHECKPOINT, LOSS_FILE,
};
use viewsynth::viewnet::{load_checkpoint, AngleQuery, ParamMap, ViewNet, ViewNetConfig};
use viewsynth::Error;

fn scalar_map(v: f64) -> ParamMap<f64> {
    [("x".to_string(), Tensor::from_vec(&[1], vec![v]).unwrap())].into()
}

fn few_poses(n: usize) -> Vec<CameraPose> {
    GridSpec::TRAINING
        .poses()
        .unwrap()
        .into_iter()
        .step_by(7)
        .take(n)
        .collect()
}

fn small_views(instances: u64, poses: usize) -> ClassViews {
    ClassViews::render(ShapeClass::Mug, 0..instances, &few_poses(poses), 16).unwrap()
}

fn micro_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_size: 4,
        holdout: 0.0,
        checkpoint_every: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn clipping_examples() {
    let mut g: ParamMap<f32> = [
        (
            "a".to_string(),
            Tensor::from_vec(&[3], vec![2.5, -3.0, 0.25]).unwrap(),
        ),
        ("b".to_string(), Tensor::from_vec(&[1], vec![-0.5]).unwrap()),
    ]
    .into();
    clip_gradients(&mut g, (-1.0, 1.0));
    assert_eq!(g["a"].data(), &[1.0, -1.0, 0.25]);
    assert_eq!(g["b"].data(), &[-0.5]);
}

proptest! {
    #[test]
    fn clipped_gradients_stay_in_range(values in prop::collection::vec(-1e6f32..1e6, 1..64)) {
        let n = values.len();
        let mut g: ParamMap<f32> = [("w".to_string(), Tensor::from_vec(&[n], values.clone()).unwrap())].into();
        clip_gradients(&mut g, (-1.0, 1.0));
        for (after, before) in g["w"].data().iter().zip(&values) {
            prop_assert!(after.abs() <= 1.0);
            if before.abs() <= 1.0 {
                prop_assert_eq!(after, before);
            }
        }
    }
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut p = scalar_map(1.5);
    let mut st = AdamState::new(&p);
    adam_step(&mut p, &scalar_map(0.0), &mut st, &AdamConfig::default()).unwrap();
    assert_eq!(p["x"].data(), &[1.5]);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_minimizes_a_quadratic() {
    let cfg = AdamConfig {
        learning_rate: 0.01,
        ..AdamConfig::default()
    };
    let mut p = scalar_map(0.0);
    let mut st = AdamState::new(&p);
    let mut converged_at = None;
    for step in 1..=5000 {
        let x = p["x"].data()[0];
        adam_step(&mut p, &scalar_map(2.0 * (x - 3.0)), &mut st, &cfg).unwrap();
        if converged_at.is_none() && (p["x"].data()[0] - 3.0).abs() < 1e-3 {
            converged_at = Some(step);
        }
    }
    assert!(converged_at.is_some(), "never got within 1e-3 of 3");
    assert!(
        (p["x"].data()[0] - 3.0).abs() < 1e-3,
        "x = {}",
        p["x"].data()[0]
    );
}

#[test]
fn adam_first_step_is_learning_rate_sized() {
    let cfg = AdamConfig::default();
    for g in [1e-3, 1.0, 1e3, -42.0] {
        let mut p = scalar_map(0.0);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &scalar_map(g), &mut st, &cfg).unwrap();
        // At t = 1 the corrected moments are g and g^2, so the step is lr * g / (|g| + eps).
        let moved = p["x"].data()[0].abs();
        assert!(
            (moved - cfg.learning_rate).abs() < 1e-6 * cfg.learning_rate / g.abs().min(1.0),
            "g={g}: {moved}"
        );
        assert_eq!(-p["x"].data()[0].signum(), g.signum());
    }
}

#[test]
fn adam_is_bitwise_reproducible_and_checks_shapes() {
    let init: ParamMap<f32> = [(
        "w".to_string(),
        Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]).unwrap(),
    )]
    .into();
    let grads: ParamMap<f32> = [(
        "w".to_string(),
        Tensor::from_vec(&[3], vec![0.7, 0.01, -2.0]).unwrap(),
    )]
    .into();
    let run = || {
        let mut p = init.clone();
        let mut st = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &grads, &mut st, &AdamConfig::default()).unwrap();
        }
        (p, st)
    };
    assert_eq!(run(), run());

    let mut p = init.clone();
    let mut st = AdamState::new(&p);
    let bad: ParamMap<f32> = [(
        "w".to_string(),
        Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap(),
    )]
    .into();
    assert!(matches!(
        adam_step(&mut p, &bad, &mut st, &AdamConfig::default()),
        Err(Error::InvalidShape(_))
    ));
    assert_eq!(p, init);
    assert_eq!(st.step, 0);
}

#[test]
fn pairs_never_cross_instances() {
    let views = small_views(3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let b = sample_pairs(&views, &[0, 1, 2], 8, &mut rng).unwrap();
        assert_eq!(b.inputs.shape(), &[8, 4, 16, 16]);
        assert_eq!(b.target_rgb.shape(), &[8, 3, 16, 16]);
        assert_eq!(b.target_depth.shape(), &[8, 1, 16, 16]);
        assert_eq!(b.input_instances, b.target_instances);
        for (ix, q) in b.indices.iter().zip(&b.queries) {
            let inst = &views.instances[ix.instance];
            let (a, t) = (
                &inst.views[ix.input_view].pose,
                &inst.views[ix.target_view].pose,
            );
            assert_eq!(*q, AngleQuery::new(t.yaw - a.yaw, t.pitch - a.pitch));
        }
    }
}

#[test]
fn single_pose_instances_pair_with_themselves() {
    let views = small_views(2, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = sample_pairs(&views, &[0, 1], 6, &mut rng).unwrap();
    for q in &b.queries {
        assert_eq!((q.delta_yaw, q.delta_pitch), (0.0, 0.0));
    }
    let n = 16 * 16;
    for i in 0..6 {
        let inst = &views.instances[b.indices[i].instance].views[0];
        assert_eq!(
            &b.inputs.data()[i * 4 * n..i * 4 * n + 3 * n],
            inst.rgb.data()
        );
        assert_eq!(
            &b.target_rgb.data()[i * 3 * n..(i + 1) * 3 * n],
            inst.rgb.data()
        );
    }
}

#[test]
fn instance_selection_is_uniform() {
    let k = 5;
    let views = small_views(k as u64, 2);
    let train: Vec<usize> = (0..k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0f64; k];
    let draws = 10_000;
    for ix in sample_pair_indices(&views, &train, draws, &mut rng).unwrap() {
        counts[ix.instance] += 1.0;
    }
    let expected = draws as f64 / k as f64;
    let chi2: f64 = counts
        .iter()
        .map(|c| (c - expected).powi(2) / expected)
        .sum();
    // Chi-square with k-1 degrees of freedom: mean k-1, variance 2(k-1).
    let df = (k - 1) as f64;
    assert!(
        chi2 <= df + 3.0 * (2.0 * df).sqrt(),
        "chi2 = {chi2}, counts {counts:?}"
    );
}

#[test]
fn empty_class_is_rejected() {
    let views = small_views(1, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        sample_pairs(&views, &[], 4, &mut rng),
        Err(Error::EmptyClass(_))
    ));
    let mut empty = views.clone();
    empty.instances[0].views.clear();
    assert!(matches!(
        sample_pairs(&empty, &[0], 4, &mut rng),
        Err(Error::EmptyClass(_))
    ));
}

#[test]
fn training_is_deterministic() {
    let views = small_views(2, 6);
    let run = || {
        let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 3).unwrap();
        train(net, &views, &micro_config(15), None, &mut |_| {}).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.net, b.net);
    assert_eq!(a.trace.records.len(), 15);
}

#[test]
fn loss_falls_on_a_small_problem() {
    let views = small_views(2, 6);
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 5).unwrap();
    let cfg = TrainConfig {
        optimizer: AdamConfig {
            learning_rate: 0.005,
            ..AdamConfig::default()
        },
        ..micro_config(300)
    };
    let out = train(net, &views, &cfg, None, &mut |_| {}).unwrap();
    let totals = out.trace.totals();
    let median = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (first, last) = (median(&totals[..30]), median(&totals[totals.len() - 30..]));
    assert!(last < first, "first {first}, last {last}");
}

fn reconstruction_error(net: &ViewNet<f32>, views: &ClassViews) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for inst in &views.instances {
        for v in &inst.views {
            let out = net
                .generate(&v.input(), &[AngleQuery::new(0.0, 0.0)])
                .unwrap();
            total +=
                image_error(&out.rgb, &v.rgb).unwrap() + image_error(&out.depth, &v.depth).unwrap();
            n += 2.0;
        }
    }
    total / n
}

#[test]
fn autoencoding_improves_reconstruction() {
    // One pose per instance: every pair is a self-pair with zero rotation.
    let views = small_views(4, 1);
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 8).unwrap();
    let before = reconstruction_error(&net, &views);
    let cfg = TrainConfig {
        optimizer: AdamConfig {
            learning_rate: 0.005,
            ..AdamConfig::default()
        },
        ..micro_config(250)
    };
    let out = train(net, &views, &cfg, None, &mut |_| {}).unwrap();
    let after = reconstruction_error(&out.net, &views);
    assert!(after < before, "error before {before}, after {after}");
}

#[test]
fn run_directory_contents() {
    let dir = tempfile::tempdir().unwrap();
    let views = small_views(3, 3);
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 1).unwrap();
    let cfg = TrainConfig {
        holdout: 0.34,
        checkpoint_every: 2,
        ..micro_config(5)
    };
    let out = train(net, &views, &cfg, Some(dir.path()), &mut |_| {}).unwrap();
    assert_eq!(out.split.train, vec![0, 1]);
    assert_eq!(out.split.holdout, vec![2]);

    let echoed = std::fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap();
    let doc = viewsynth::kv::KvDoc::parse(&echoed).unwrap();
    assert_eq!(TrainConfig::from_kv(&doc).unwrap(), cfg);
    assert_eq!(
        ViewNetConfig::from_kv(&doc.section("viewnet")).unwrap(),
        ViewNetConfig::micro()
    );
    assert_eq!(doc.get("data.holdout_instances"), Some("2"));

    let csv = std::fs::read_to_string(dir.path().join(LOSS_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with('#') && lines[0].contains("batch"));
    assert_eq!(lines[1], "iteration,rgb_loss,depth_loss,total");
    assert_eq!(lines.len(), 2 + 5);

    let ckpts: Vec<_> = std::fs::read_dir(dir.path().join(CHECKPOINT_DIR))
        .unwrap()
        .collect();
    assert_eq!(ckpts.len(), 2);
    let saved: ViewNet<f32> = load_checkpoint(&dir.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(saved, out.net);
}

#[test]
fn divergence_aborts_and_keeps_last_good_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut views = small_views(1, 2);
    for v in &mut views.instances[0].views {
        v.rgb.data_mut()[0] = f32::NAN;
    }
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 1).unwrap();
    let err = train(
        net.clone(),
        &views,
        &micro_config(3),
        Some(dir.path()),
        &mut |_| {},
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::Divergence { iteration: 1, .. }),
        "{err}"
    );
    let good: ViewNet<f32> = load_checkpoint(&dir.path().join(LAST_GOOD_CHECKPOINT)).unwrap();
    assert_eq!(good, net);
}

#[test]
fn invalid_configs_are_rejected() {
    let views = small_views(1, 1);
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 1).unwrap();
    let bad = TrainConfig {
        batch_size: 1,
        ..micro_config(1)
    };
    assert!(matches!(
        train(net.clone(), &views, &bad, None, &mut |_| {}),
        Err(Error::Config(_))
    ));
    let wrong_size = ClassViews::render(ShapeClass::Can, 0..1, &few_poses(1), 32).unwrap();
    assert!(train(net, &wrong_size, &micro_config(1), None, &mut |_| {}).is_err());
}
