use proptest::prelude::*;
use viewsynth::extract::{
    detection_input, normalize_crop, route, segment_background_threshold, CropGeometry,
    ModelRegistry,
};
use viewsynth::image::crop;
use viewsynth::render::{
    focal_length_px, make_instance, mask_bbox, rasterize, render_frame, render_view, CameraPose,
    Placement, Scene, ShapeClass, Vec3, FRAME_SCALE,
};
use viewsynth::tensor::{Init, Tensor};
use viewsynth::viewnet::{save_checkpoint, ViewNet, ViewNetConfig};
use viewsynth::Error;

const BLACK: [f32; 3] = [0.0; 3];
const TOL: f32 = 0.02;

fn ones(shape: &[usize]) -> Tensor<f32> {
    Tensor::new(shape, Init::Constant(1.0)).unwrap()
}

#[test]
fn empty_scene_has_no_detections() {
    let scene = Tensor::zeros(&[3, 40, 30]).unwrap();
    assert!(segment_background_threshold(&scene, BLACK, TOL, None)
        .unwrap()
        .is_empty());
}

#[test]
fn single_render_gives_one_detection_matching_the_renderer_mask() {
    for (class, pose) in [
        (ShapeClass::Can, (0.0, 0.0)),
        (ShapeClass::Mug, (20.0, 60.0)),
        (ShapeClass::TableLike, (30.0, 24.0)),
    ] {
        let frame = render_frame(
            &make_instance(class, 2),
            &CameraPose::new(pose.0, pose.1),
            96,
        )
        .unwrap();
        let dets =
            segment_background_threshold(&frame.rgb, BLACK, TOL, Some(class.name())).unwrap();
        assert_eq!(dets.len(), 1, "{class}");
        let d = &dets[0];
        assert_eq!(d.class_label, class.name());
        let (y, x, h, w) = mask_bbox(&frame.mask).unwrap();
        assert_eq!(
            (d.bbox.y, d.bbox.x, d.bbox.height, d.bbox.width),
            (y, x, h, w)
        );
        assert_eq!(d.mask, crop(&frame.mask, y, x, h, w).unwrap());
    }
}

#[test]
fn separate_objects_give_disjoint_detections() {
    let a = render_frame(
        &make_instance(ShapeClass::Can, 0),
        &CameraPose::new(0.0, 0.0),
        48,
    )
    .unwrap();
    let b = render_frame(
        &make_instance(ShapeClass::Box, 0),
        &CameraPose::new(10.0, 30.0),
        48,
    )
    .unwrap();
    // Side by side on one 48 x 96 canvas.
    let mut scene = vec![0.0f32; 3 * 48 * 96];
    for c in 0..3 {
        for y in 0..48 {
            for x in 0..48 {
                scene[c * 48 * 96 + y * 96 + x] = a.rgb.data()[c * 2304 + y * 48 + x];
                scene[c * 48 * 96 + y * 96 + 48 + x] = b.rgb.data()[c * 2304 + y * 48 + x];
            }
        }
    }
    let scene = Tensor::from_vec(&[3, 48, 96], scene).unwrap();
    let dets = segment_background_threshold(&scene, BLACK, TOL, None).unwrap();
    assert_eq!(dets.len(), 2);
    assert!(!dets[0].bbox.intersects(&dets[1].bbox));
    assert!(dets
        .iter()
        .all(|d| d.class_label == "unknown" && d.score == 1.0));
}

#[test]
fn wide_crop_is_letterboxed() {
    let out = normalize_crop(&ones(&[3, 100, 200]), &ones(&[1, 100, 200]), 128).unwrap();
    assert_eq!(out.shape(), &[4, 128, 128]);
    let g = CropGeometry::new(100, 200, 128).unwrap();
    assert_eq!(
        (g.content_height, g.content_width, g.top, g.left),
        (64, 128, 32, 0)
    );
    let plane = 128 * 128;
    for c in 0..4 {
        for y in 0..128 {
            let expect = if (32..96).contains(&y) { 1.0 } else { 0.0 };
            for x in 0..128 {
                let v = out.data()[c * plane + y * 128 + x];
                assert!((v - expect).abs() < 1e-6, "c{c} y{y} x{x}: {v}");
                if c == 3 {
                    assert_eq!(v, expect);
                }
            }
        }
    }
}

#[test]
fn square_crop_is_only_resized() {
    let g = CropGeometry::new(50, 50, 64).unwrap();
    assert_eq!(
        (g.content_height, g.content_width, g.top, g.left),
        (64, 64, 0, 0)
    );
    let out = normalize_crop(&ones(&[3, 50, 50]), &ones(&[1, 50, 50]), 64).unwrap();
    assert!(out.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn zero_area_crop_is_rejected() {
    let rgb = Tensor::from_vec(&[3, 0, 5], vec![]).unwrap();
    let mask = Tensor::from_vec(&[1, 0, 5], vec![]).unwrap();
    assert!(matches!(
        normalize_crop(&rgb, &mask, 32),
        Err(Error::InvalidCrop(_))
    ));
    assert!(matches!(
        normalize_crop(&ones(&[3, 4, 4]), &ones(&[1, 4, 5]), 32),
        Err(Error::InvalidShape(_))
    ));
}

/// Wide shot with the same camera intrinsics as the training frames: the
/// target at the origin and a second object off to the side.
fn two_object_scene(
    target: ShapeClass,
    other: ShapeClass,
    cam: &CameraPose,
    size: usize,
) -> Tensor<f32> {
    let (_, forward, right, _) = cam.frame();
    let scene = Scene {
        objects: vec![
            Placement {
                instance: make_instance(target, 7),
                offset: Vec3::default(),
            },
            Placement {
                instance: make_instance(other, 3),
                offset: right * 2.8 + forward * 0.5,
            },
        ],
    };
    let n = FRAME_SCALE * size;
    render_view(&scene, cam, n + 64, 3 * n, focal_length_px(cam, n))
        .unwrap()
        .rgb
}

#[test]
fn scene_pipeline_reproduces_direct_samples() {
    let size = 64;
    for (k, class) in ShapeClass::ALL.into_iter().enumerate() {
        let other = ShapeClass::ALL[(k + 1) % 5];
        for (pitch, yaw) in [(0.0, 0.0), (20.0, 132.0), (30.0, 300.0)] {
            let cam = CameraPose::new(pitch, yaw);
            let scene = two_object_scene(class, other, &cam, size);
            let (h, w) = (scene.shape()[1], scene.shape()[2]);
            let dets =
                segment_background_threshold(&scene, BLACK, TOL, Some(class.name())).unwrap();
            assert!(dets.len() >= 2, "{class} ({pitch},{yaw})");
            let target = dets
                .iter()
                .find(|d| {
                    (d.bbox.x..d.bbox.x + d.bbox.width).contains(&(w / 2))
                        && (d.bbox.y..d.bbox.y + d.bbox.height).contains(&(h / 2))
                })
                .unwrap();
            let got = detection_input(&scene, target, size).unwrap();
            let want = rasterize(&make_instance(class, 7), &cam, size)
                .unwrap()
                .input();
            let mae: f32 = got
                .data()
                .iter()
                .zip(want.data())
                .map(|(a, b)| (a - b).abs())
                .sum::<f32>()
                / got.len() as f32;
            assert!(
                mae <= 2.0 / 255.0,
                "{class} ({pitch},{yaw}): mae {}",
                mae * 255.0
            );
        }
    }
}

fn micro_checkpoint(
    dir: &std::path::Path,
    name: &str,
    seed: u64,
) -> (std::path::PathBuf, ViewNet<f32>) {
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), seed).unwrap();
    let path = dir.join(name);
    save_checkpoint(&net, &path).unwrap();
    (path, net)
}

#[test]
fn routing_follows_label_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let (mug_path, mug) = micro_checkpoint(dir.path(), "mug.vfck", 1);
    let (bottle_path, bottle) = micro_checkpoint(dir.path(), "bottle.vfck", 2);
    let reg = ModelRegistry::from_paths([("mug", mug_path), ("bottle", bottle_path)]).unwrap();
    assert_eq!(route("mug", &reg, None).unwrap(), &mug);
    assert_eq!(route("mug", &reg, Some("bottle")).unwrap(), &bottle);
    assert!(matches!(route("chair", &reg, None), Err(Error::NoModel(c)) if c == "chair"));
    assert!(matches!(
        route("mug", &ModelRegistry::new(), None),
        Err(Error::NoModel(_))
    ));
}

#[test]
fn registry_file_is_validated_on_load() {
    let dir = tempfile::tempdir().unwrap();
    micro_checkpoint(dir.path(), "mug.vfck", 1);
    let file = dir.path().join("models.txt");
    std::fs::write(&file, "# class = checkpoint\nmug = mug.vfck\n").unwrap();
    let reg = ModelRegistry::load(&file).unwrap();
    assert_eq!(reg.classes().collect::<Vec<_>>(), ["mug"]);

    std::fs::write(dir.path().join("bad.vfck"), b"not a checkpoint").unwrap();
    std::fs::write(&file, "mug = mug.vfck\ncan = bad.vfck\n").unwrap();
    assert!(matches!(
        ModelRegistry::load(&file),
        Err(Error::Checkpoint(_))
    ));
    std::fs::write(&file, "mug = mug.vfck\nmug = mug.vfck\n").unwrap();
    assert!(ModelRegistry::load(&file).is_err());
}

proptest! {
    #[test]
    fn crop_is_aspect_preserving_and_mask_binary(h in 1usize..120, w in 1usize..120, s in 16usize..80, seed in 0u64..100) {
        let rgb = Tensor::new(&[3, h, w], Init::Uniform { low: 0.0, high: 1.0, seed }).unwrap();
        let noise = Tensor::<f32>::new(&[1, h, w], Init::Uniform { low: 0.0, high: 1.0, seed: seed + 1 }).unwrap();
        let mask = Tensor::from_vec(&[1, h, w], noise.data().iter().map(|&v| (v > 0.3) as u8 as f32).collect()).unwrap();
        let out = normalize_crop(&rgb, &mask, s).unwrap();
        let plane = s * s;
        prop_assert!(out.data()[3 * plane..].iter().all(|&v| v == 0.0 || v == 1.0));
        let g = CropGeometry::new(h, w, s).unwrap();
        prop_assert_eq!(g.content_height.max(g.content_width), s);
        // width/height of the content matches the crop within a pixel of rounding
        let expect_w = g.content_height as f64 * w as f64 / h as f64;
        let expect_h = g.content_width as f64 * h as f64 / w as f64;
        prop_assert!((g.content_width as f64 - expect_w).abs() <= 1.0 || (g.content_height as f64 - expect_h).abs() <= 1.0);
        prop_assert_eq!(g.top, (s - g.content_height) / 2);
        prop_assert_eq!(g.left, (s - g.content_width) / 2);
    }
}
