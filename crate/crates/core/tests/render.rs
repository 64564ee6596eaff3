use std::collections::BTreeSet;

use proptest::prelude::*;
use viewsynth::render::{
    angle_grid, generate_dataset, make_instance, make_instance_named, rasterize, render_frame,
    CameraPose, DatasetManifest, DatasetSpec, GridSpec, ShapeClass, ShapeParams, Sphere,
    MANIFEST_FILE,
};
use viewsynth::Error;

fn bits(d: &[f32]) -> Vec<u32> {
    d.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn instances_are_deterministic_and_distinct() {
    assert_eq!(
        make_instance(ShapeClass::Mug, 1),
        make_instance(ShapeClass::Mug, 1)
    );
    for class in ShapeClass::ALL {
        let sets: BTreeSet<Vec<u64>> = (0..20)
            .map(|s| {
                make_instance(class, s)
                    .params
                    .entries()
                    .iter()
                    .map(|(_, v)| v.to_bits())
                    .collect()
            })
            .collect();
        assert_eq!(sets.len(), 20, "{class}");
    }
}

#[test]
fn mug_has_body_and_handle() {
    let inst = make_instance_named("mug", 1).unwrap();
    let ShapeParams::Mug {
        radius,
        height,
        handle_major,
        handle_minor,
        ..
    } = inst.params
    else {
        panic!("mug params expected, got {:?}", inst.params);
    };
    assert!(radius > 0.0 && height > 0.0 && handle_major > handle_minor && handle_minor > 0.0);
}

#[test]
fn unknown_class_is_rejected() {
    assert!(
        matches!(make_instance_named("teapot", 0), Err(Error::UnknownClass(c)) if c == "teapot")
    );
}

#[test]
fn all_dimensions_positive() {
    for class in ShapeClass::ALL {
        for seed in 0..20 {
            let inst = make_instance(class, seed);
            assert!(inst.params.entries().iter().all(|(_, v)| *v > 0.0));
            assert!(inst.scale() > 0.0);
        }
    }
}

#[test]
fn yaw_is_periodic() {
    let inst = make_instance(ShapeClass::Mug, 3);
    for yaw in [0.0, 48.0, 270.0] {
        let a = rasterize(&inst, &CameraPose::new(10.0, yaw), 32).unwrap();
        let b = rasterize(&inst, &CameraPose::new(10.0, yaw + 360.0), 32).unwrap();
        assert_eq!(bits(a.rgb.data()), bits(b.rgb.data()));
        assert_eq!(bits(a.depth.data()), bits(b.depth.data()));
    }
}

#[test]
fn symmetric_can_silhouette_ignores_yaw() {
    let inst = make_instance(ShapeClass::Can, 4);
    let a = render_frame(&inst, &CameraPose::new(0.0, 0.0), 96).unwrap();
    let b = render_frame(&inst, &CameraPose::new(0.0, 90.0), 96).unwrap();
    assert_eq!(a.mask, b.mask);
    let a = rasterize(&inst, &CameraPose::new(0.0, 0.0), 32).unwrap();
    let b = rasterize(&inst, &CameraPose::new(0.0, 90.0), 32).unwrap();
    assert_eq!(a.mask, b.mask);
}

/// Independent ray-sphere intersection for the pixel `(i, j)` of an `n x n`
/// frame, camera on +z at pitch = yaw = 0.
fn sphere_hit(n: usize, i: usize, j: usize, d: f64, r: f64, fov: f64) -> Option<f64> {
    let half = (fov.to_radians() / 2.0).tan();
    let u = (2.0 * (j as f64 + 0.5) / n as f64 - 1.0) * half;
    let v = (1.0 - 2.0 * (i as f64 + 0.5) / n as f64) * half;
    let len = (u * u + v * v + 1.0).sqrt();
    let dir = [u / len, v / len, -1.0 / len];
    let eye = [0.0, 0.0, d];
    let b: f64 = (0..3).map(|k| eye[k] * dir[k]).sum();
    let c = d * d - r * r;
    let disc = b * b - c;
    (disc >= 0.0).then(|| -b - disc.sqrt())
}

#[test]
fn sphere_depth_matches_ray_intersection() {
    for (d, r) in [(2.5, 1.0), (4.0, 1.0), (2.5, 0.6)] {
        let cam = CameraPose {
            distance: d,
            ..CameraPose::new(0.0, 0.0)
        };
        let n = 33;
        let f = render_frame(&Sphere { radius: r }, &cam, n).unwrap();
        // Center pixel looks straight down the axis.
        let center = f.depth.data()[16 * n + 16];
        assert!(
            (center as f64 - ((d - r) - (d - 1.0)) / 2.0).abs() < 1e-4,
            "{center}"
        );
        for i in 0..n {
            for j in 0..n {
                let got = f.depth.data()[i * n + j] as f64;
                match sphere_hit(n, i, j, d, r, cam.fov) {
                    Some(t) => {
                        assert_eq!(f.mask.data()[i * n + j], 1.0);
                        assert!((got - (t - (d - 1.0)) / 2.0).abs() < 1e-3, "({i},{j})");
                    }
                    None => {
                        assert_eq!(f.mask.data()[i * n + j], 0.0);
                        assert_eq!(got, 1.0);
                    }
                }
            }
        }
    }
    // Radius one at distance 2.5: the nearest point maps to exactly zero.
    let f = render_frame(&Sphere { radius: 1.0 }, &CameraPose::new(0.0, 0.0), 33).unwrap();
    assert!(f.depth.data()[16 * 33 + 16] < 1e-4);
}

#[test]
fn degenerate_camera_is_rejected() {
    let inst = make_instance(ShapeClass::Box, 0);
    let cam = CameraPose {
        distance: 0.5,
        ..CameraPose::new(0.0, 0.0)
    };
    assert!(matches!(
        rasterize(&inst, &cam, 32),
        Err(Error::InvalidCamera(_))
    ));
    let cam = CameraPose {
        distance: 0.5,
        ..CameraPose::new(0.0, 0.0)
    };
    assert!(matches!(
        render_frame(&Sphere { radius: 1.0 }, &cam, 8),
        Err(Error::InvalidCamera(_))
    ));
    assert!(matches!(
        rasterize(&inst, &CameraPose::new(0.0, 0.0), 8),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn grid_sizes() {
    let g = angle_grid((0.0, 30.0), 10.0, (-360.0, 348.0), 12.0).unwrap();
    assert_eq!(g.len(), 120);
    let pitches: BTreeSet<u64> = g.iter().map(|p| p.pitch.to_bits()).collect();
    let yaws: BTreeSet<u64> = g.iter().map(|p| p.yaw.to_bits()).collect();
    assert_eq!(pitches.len(), 4);
    assert_eq!(yaws.len(), 360 / 12);
    assert!(g.iter().all(|p| (0.0..360.0).contains(&p.yaw)));
    assert_eq!(GridSpec::TRAINING.poses().unwrap(), g);

    let e = GridSpec::EVALUATION.poses().unwrap();
    assert_eq!(e.len(), 11 * 60);
    assert!(angle_grid((0.0, 30.0), 0.0, (0.0, 1.0), 1.0).is_err());
}

#[test]
fn dataset_is_reproducible_and_complete() {
    let spec = DatasetSpec::new(
        vec![ShapeClass::Can, ShapeClass::Mug],
        3,
        GridSpec::TRAINING,
        16,
    );
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_dataset(&spec, a.path(), false).unwrap();
    let mb = generate_dataset(&spec, b.path(), false).unwrap();
    assert_eq!(ma.records.len(), 720);
    let text_a = std::fs::read(a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(text_a, std::fs::read(b.path().join(MANIFEST_FILE)).unwrap());
    for r in &ma.records {
        for p in [&r.rgb_path, &r.depth_path, &r.mask_path] {
            let x = std::fs::read(a.path().join(p)).unwrap();
            assert_eq!(
                x,
                std::fs::read(b.path().join(p)).unwrap(),
                "{}",
                p.display()
            );
        }
    }
    assert_eq!(DatasetManifest::load(a.path()).unwrap(), ma);
    assert_eq!(ma, mb);

    // Stored samples keep the mask/depth/background contract.
    for r in ma.records.iter().step_by(37) {
        let s = ma.load_sample(a.path(), r).unwrap();
        for p in 0..256 {
            let m = s.mask.data()[p];
            assert!(m == 0.0 || m == 1.0);
            assert_eq!(m == 1.0, s.depth.data()[p] < 1.0);
            if m == 0.0 {
                assert!((0..3).all(|c| s.rgb.data()[c * 256 + p] == 0.0));
            }
        }
    }

    assert!(matches!(
        generate_dataset(&spec, a.path(), false),
        Err(Error::OutputExists(_))
    ));
    let small = DatasetSpec::new(vec![ShapeClass::Box], 1, GridSpec::TRAINING, 16);
    let m = generate_dataset(&small, a.path(), true).unwrap();
    assert_eq!(m.records.len(), 120);
    assert!(!a.path().join("can").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn samples_keep_mask_depth_and_background_contract(
        class in 0usize..5, seed in 0u64..50, pitch in 0.0f64..30.0, yaw in -720.0f64..720.0
    ) {
        let inst = make_instance(ShapeClass::ALL[class], seed);
        let s = rasterize(&inst, &CameraPose::new(pitch, yaw), 24).unwrap();
        let plane = 24 * 24;
        prop_assert!(s.mask.data().iter().any(|&m| m == 1.0));
        for p in 0..plane {
            let m = s.mask.data()[p];
            prop_assert!(m == 0.0 || m == 1.0);
            prop_assert_eq!(m == 1.0, s.depth.data()[p] < 1.0);
            for c in 0..3 {
                let v = s.rgb.data()[c * plane + p];
                prop_assert!((0.0..=1.0).contains(&v));
                if m == 0.0 {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }
}
