use viewsynth::render::{make_instance_named, rasterize, CameraPose};
use viewsynth::viewnet::{checkpoint, ViewNet, ViewNetConfig};
use viewsynth_web::demo::{compare, describe, load, render_pair, to_rgba, Rgba};

#[test]
fn render_pair_puts_rgb_next_to_depth() {
    let img = render_pair("mug", 3, 20.0, 45.0, 32).unwrap();
    assert_eq!((img.width, img.height), (64, 32));
    assert_eq!(img.data.len(), 64 * 32 * 4);
    assert!(img.data.chunks(4).all(|px| px[3] == 255));

    let view = rasterize(
        &make_instance_named("mug", 3).unwrap(),
        &CameraPose::new(20.0, 45.0),
        32,
    )
    .unwrap();
    let rgb = to_rgba(&view.rgb);
    let row = 10;
    assert_eq!(
        &img.data[row * 64 * 4..row * 64 * 4 + 32 * 4],
        &rgb.data[row * 32 * 4..(row + 1) * 32 * 4]
    );
    let grey = &img.data[row * 64 * 4 + 32 * 4..(row + 1) * 64 * 4];
    assert!(grey.chunks(4).all(|px| px[0] == px[1] && px[1] == px[2]));
}

#[test]
fn unknown_class_is_an_error() {
    assert!(render_pair("teapot", 0, 0.0, 0.0, 16).is_err());
}

#[test]
fn hstack_keeps_rows_aligned() {
    let a = Rgba {
        width: 1,
        height: 2,
        data: vec![1, 1, 1, 1, 2, 2, 2, 2],
    };
    let b = Rgba {
        width: 2,
        height: 2,
        data: vec![3; 8].into_iter().chain(vec![4; 8]).collect(),
    };
    let s = Rgba::hstack(&[a, b]);
    assert_eq!(s.width, 3);
    assert_eq!(&s.data[..12], &[1, 1, 1, 1, 3, 3, 3, 3, 3, 3, 3, 3]);
    assert_eq!(&s.data[12..], &[2, 2, 2, 2, 4, 4, 4, 4, 4, 4, 4, 4]);
}

#[test]
fn compare_scores_a_loaded_checkpoint() {
    let net = ViewNet::<f32>::build(ViewNetConfig::micro(), 2).unwrap();
    let bytes = checkpoint::to_bytes(&net);
    let loaded = load(&bytes).unwrap();
    assert!(describe(&loaded).starts_with("16 px input, 2 blocks"));
    let c = compare(&loaded, "can", 1, 10.0, 0.0, 36.0, 10.0).unwrap();
    assert_eq!(c.generated_rgb.shape(), &[3, 16, 16]);
    assert_eq!(c.true_depth.shape(), &[1, 16, 16]);
    for (e, acc) in [
        (c.error_rgb, c.accuracy_rgb),
        (c.error_depth, c.accuracy_depth),
    ] {
        assert!((0.0..=255.0).contains(&e));
        assert!((acc - 100.0 * (1.0 - e / 255.0)).abs() < 1e-9);
    }
    assert_eq!(c.strip().width, 64);

    let mut corrupt = bytes.clone();
    corrupt.truncate(bytes.len() - 3);
    assert!(load(&corrupt).is_err());
}
