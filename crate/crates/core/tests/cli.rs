use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn viewsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewsynth"))
        .args(args)
        .env_remove("VIEWSYNTH_DATA")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_error(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    let last = err.lines().last().unwrap_or_default();
    assert!(
        last.starts_with(&format!("error: kind={kind} message=")),
        "unexpected error line {last:?}"
    );
}

const SMALL_GRID: &str = "pitch=0:10:10 yaw=0:348:12";

/// 16 px micro dataset of two cans and one mug plus a trained can model.
struct Fixture {
    _tmp: TempDir,
    root: PathBuf,
    data: PathBuf,
    registry: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().to_path_buf();
    let data = root.join("data");
    let o = viewsynth(&[
        "render-dataset",
        "--classes",
        "can,mug",
        "--instances",
        "3",
        "--size",
        "16",
        "--grid",
        SMALL_GRID,
        "--out",
        s(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = root.join("run-can");
    let o = viewsynth(&[
        "train",
        "--class",
        "can",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--model",
        "micro",
        "--iters",
        "20",
        "--batch",
        "4",
        "--checkpoint-every",
        "10",
        "--threads",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let registry = root.join("registry.txt");
    std::fs::write(&registry, "can = run-can/model.vfck\n").unwrap();
    Fixture {
        _tmp: tmp,
        root,
        data,
        registry,
    }
}

#[test]
fn help_works_for_every_subcommand() {
    for sub in [
        "render-dataset",
        "train",
        "generate",
        "evaluate",
        "gradcheck",
        "info",
    ] {
        let o = viewsynth(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("--"), "{sub} help lists no flags");
    }
    assert_eq!(viewsynth(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_2_with_one_line() {
    for args in [
        &["frobnicate"][..],
        &["train", "--bogus"],
        &["gradcheck", "--precision", "f32"],
        &[],
    ] {
        let o = viewsynth(args);
        assert_error(&o, 2, "usage");
        assert_eq!(stderr(&o).lines().count(), 1, "{args:?}");
    }
}

#[test]
fn render_dataset_writes_manifest_and_refuses_non_empty_out() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d");
    let args = [
        "render-dataset",
        "--classes",
        "box",
        "--instances",
        "2",
        "--size",
        "16",
        "--grid",
        SMALL_GRID,
        "--out",
        s(&out),
    ];
    assert!(viewsynth(&args).status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    // 2 instances x 2 pitches x 30 yaws.
    assert_eq!(
        manifest.lines().filter(|l| l.starts_with("box\t")).count(),
        120
    );
    assert_error(&viewsynth(&args), 1, "output-exists");
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(viewsynth(&forced).status.success());
    assert_error(
        &viewsynth(&[
            "render-dataset",
            "--classes",
            "teapot",
            "--out",
            s(&tmp.path().join("e")),
        ]),
        1,
        "unknown-class",
    );
}

#[test]
fn data_root_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("env-data");
    let o = Command::new(env!("CARGO_BIN_EXE_viewsynth"))
        .args([
            "render-dataset",
            "--classes",
            "can",
            "--instances",
            "1",
            "--size",
            "16",
            "--grid",
            SMALL_GRID,
        ])
        .env("VIEWSYNTH_DATA", &data)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.join("manifest.txt").exists());
}

#[test]
fn train_is_reproducible_and_echoes_its_config() {
    let f = fixture();
    let run = f.root.join("run-can");
    for file in [
        "model.vfck",
        "loss.csv",
        "train_config.txt",
        "checkpoints/iter_000010.vfck",
    ] {
        assert!(run.join(file).exists(), "{file} missing");
    }
    let echoed = std::fs::read_to_string(run.join("train_config.txt")).unwrap();
    assert!(echoed.contains("train.iterations = 20"));
    assert!(echoed.contains("train.batch_size = 4"));
    assert!(echoed.contains("viewnet.input_size = 16"));

    let again = f.root.join("run-again");
    let o = viewsynth(&[
        "train",
        "--class",
        "can",
        "--data",
        s(&f.data),
        "--out",
        s(&again),
        "--model",
        "micro",
        "--iters",
        "20",
        "--batch",
        "4",
        "--checkpoint-every",
        "10",
        "--threads",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(run.join("model.vfck")).unwrap(),
        std::fs::read(again.join("model.vfck")).unwrap()
    );

    // The run directory is not overwritten without --force.
    let o = viewsynth(&[
        "train",
        "--class",
        "can",
        "--data",
        s(&f.data),
        "--out",
        s(&again),
        "--model",
        "micro",
        "--iters",
        "2",
    ]);
    assert_error(&o, 1, "output-exists");
}

#[test]
fn train_config_file_is_merged_and_unknown_keys_rejected() {
    let f = fixture();
    let cfg = f.root.join("cfg.txt");
    std::fs::write(&cfg, "train.iterations = 3\ntrain.batch_size = 2\nviewnet.input_size = 16\nviewnet.encoder_channels = 3,4\nviewnet.latent_dim = 6\nviewnet.fc_widths = 5\nviewnet.skip_weights = 1,1\nviewnet.branch_channels_rgb = 3\nviewnet.branch_channels_depth = 2\n").unwrap();
    let out = f.root.join("run-cfg");
    let o = viewsynth(&[
        "train",
        "--class",
        "mug",
        "--data",
        s(&f.data),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--iters",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = std::fs::read_to_string(out.join("train_config.txt")).unwrap();
    assert!(
        echoed.contains("train.iterations = 4"),
        "flag overrides file"
    );
    assert!(echoed.contains("train.batch_size = 2"));

    std::fs::write(&cfg, "train.iterations = 3\ntrain.learning_rat = 0.1\n").unwrap();
    let o = viewsynth(&[
        "train",
        "--class",
        "mug",
        "--data",
        s(&f.data),
        "--out",
        s(&f.root.join("x")),
        "--config",
        s(&cfg),
    ]);
    assert_error(&o, 1, "config");
    std::fs::write(&cfg, "optimizer.lr = 0.1\n").unwrap();
    let o = viewsynth(&[
        "train",
        "--class",
        "mug",
        "--data",
        s(&f.data),
        "--out",
        s(&f.root.join("y")),
        "--config",
        s(&cfg),
    ]);
    assert_error(&o, 1, "config");
}

#[test]
fn generate_writes_a_sweep_with_an_index() {
    let f = fixture();
    let view = f.data.join("can/0000/p0_y0_rgb.png");
    let mask = f.data.join("can/0000/p0_y0_mask.png");
    let out = f.root.join("gen");
    let o = viewsynth(&[
        "generate",
        "--input",
        s(&view),
        "--mask",
        s(&mask),
        "--class",
        "can",
        "--sweep",
        "0:360:12",
        "--registry",
        s(&f.registry),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("rgb_")).count(), 30);
    assert_eq!(names.iter().filter(|n| n.starts_with("depth_")).count(), 30);
    let index = std::fs::read_to_string(out.join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 32);
    assert!(index.contains("\n1,12,0,rgb_001.png,depth_001.png\n"));

    let auto = f.root.join("gen-auto");
    let o = viewsynth(&[
        "generate",
        "--input",
        s(&view),
        "--auto-segment",
        "--class",
        "can",
        "--angles",
        "-30,30/10",
        "--registry",
        s(&f.registry),
        "--out",
        s(&auto),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(auto.join("index.csv"))
        .unwrap()
        .contains("1,30,10,"));
}

#[test]
fn generate_errors() {
    let f = fixture();
    let view = f.data.join("mug/0000/p0_y0_rgb.png");
    let o = viewsynth(&[
        "generate",
        "--input",
        s(&view),
        "--class",
        "mug",
        "--angles",
        "0",
        "--registry",
        s(&f.registry),
        "--out",
        s(&f.root.join("g1")),
    ]);
    assert_error(&o, 2, "usage");
    let err = stderr(&o);
    assert!(
        err.contains("--mask") && err.contains("--auto-segment"),
        "{err}"
    );

    // The mug has no generator unless it is routed to the can model.
    let base = [
        "generate",
        "--input",
        s(&view),
        "--auto-segment",
        "--class",
        "mug",
        "--angles",
        "0",
        "--registry",
        s(&f.registry),
    ];
    let (g2, g4) = (f.root.join("g2"), f.root.join("g4"));
    let mut no_model = base.to_vec();
    no_model.extend(["--out", s(&g2)].iter());
    assert_error(&viewsynth(&no_model), 1, "no-model");
    let converted = f.root.join("g3");
    let mut conv = base.to_vec();
    conv.extend(["--override-class", "can", "--out", s(&converted)].iter());
    assert!(viewsynth(&conv).status.success());
    assert!(converted.join("rgb_000.png").exists());

    let mut missing = base.to_vec();
    missing[2] = "/no/such/image.png";
    missing.extend(["--override-class", "can", "--out", s(&g4)].iter());
    assert_error(&viewsynth(&missing), 1, "io");
}

#[test]
fn evaluate_oracle_reports_zero_error() {
    let f = fixture();
    let out = f.root.join("eval-oracle");
    let o = viewsynth(&[
        "evaluate",
        "--oracle",
        "--data",
        s(&f.data),
        "--out",
        s(&out),
        "--grid",
        "pitch=0:10:10 yaw=0:60:30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("metric,can,mug,average\n"));
    // One held-out instance x 2 inputs x 6 references.
    assert!(report.contains("pairs,12,12,24\n"), "{report}");
    assert!(report.contains("e_rgb_px,0.0000,0.0000,0.0000\n"));
    assert!(report.contains("acc_depth_pct,100.0000,100.0000,100.0000\n"));
    assert!(out.join("rotation_can.csv").exists());
    assert!(out.join("rotation_mug_depth.png").exists());

    let again = viewsynth(&[
        "evaluate",
        "--oracle",
        "--data",
        s(&f.data),
        "--out",
        s(&out),
    ]);
    assert_error(&again, 1, "output-exists");
}

#[test]
fn evaluate_model_and_class_mismatch() {
    let f = fixture();
    let out = f.root.join("eval");
    let o = viewsynth(&[
        "evaluate",
        "--registry",
        s(&f.registry),
        "--data",
        s(&f.data),
        "--out",
        s(&out),
        "--grid",
        "pitch=0:0:10 yaw=0:60:30",
    ]);
    // The dataset holds mugs but the registry only a can model.
    assert_error(&o, 1, "config");

    let can_only = f.root.join("can-data");
    assert!(viewsynth(&[
        "render-dataset",
        "--classes",
        "can",
        "--instances",
        "3",
        "--size",
        "16",
        "--grid",
        SMALL_GRID,
        "--out",
        s(&can_only),
    ])
    .status
    .success());
    let o = viewsynth(&[
        "evaluate",
        "--registry",
        s(&f.registry),
        "--data",
        s(&can_only),
        "--out",
        s(&out),
        "--grid",
        "pitch=0:0:10 yaw=0:60:30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let acc: Vec<f64> = report
        .lines()
        .find(|l| l.starts_with("acc_rgb_pct"))
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(acc.iter().all(|&a| a > 0.0 && a < 100.0), "{acc:?}");
    let continuity = std::fs::read_to_string(out.join("continuity.csv")).unwrap();
    assert!(continuity.lines().nth(1).unwrap().starts_with("can,61,"));
}

#[test]
fn gradcheck_exit_codes() {
    let o = viewsynth(&[
        "gradcheck",
        "--model",
        "micro",
        "--precision",
        "f64",
        "--seeds",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS"));
    let o = viewsynth(&["gradcheck", "--seeds", "1", "--tolerance", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn info_prints_metadata_and_rejects_corruption() {
    let f = fixture();
    let ckpt = f.root.join("run-can/model.vfck");
    let o = viewsynth(&["info", s(&ckpt)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("format_version = 1"));
    assert!(text.contains("viewnet.input_size = 16"));
    assert!(text.contains("[tensors]"));

    let mut bytes = std::fs::read(&ckpt).unwrap();
    // First byte of the metadata text after magic, version and length.
    bytes[12] ^= 1;
    let bad = f.root.join("bad.vfck");
    std::fs::write(&bad, &bytes).unwrap();
    assert_error(&viewsynth(&["info", s(&bad)]), 1, "checkpoint-checksum");
    std::fs::write(&bad, b"PK\x03\x04").unwrap();
    assert_error(&viewsynth(&["info", s(&bad)]), 1, "checkpoint-format");
}
