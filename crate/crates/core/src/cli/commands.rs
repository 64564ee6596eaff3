use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use super::{
    Command, EvaluateArgs, GenerateArgs, GradcheckArgs, InfoArgs, RenderDatasetArgs, Status,
    TrainArgs,
};
use crate::error::{Error, Result};
use crate::eval::{
    continuity_score, cross_class_generate, evaluate_model, rotation_curve, write_sequence,
    EvalReport, EvalSet, Evaluation, OracleGenerator, ViewGenerator,
};
use crate::extract::{
    detection_input, normalize_crop, segment_background_threshold, ModelRegistry,
};
use crate::image::{crop, load_png, save_png, BitDepth};
use crate::kv::KvDoc;
use crate::render::{
    generate_dataset, mask_bbox, CameraPose, ClassViews, DatasetManifest, DatasetSpec, GridSpec,
    ShapeClass,
};
use crate::tensor::Tensor;
use crate::train::{
    split_instances, train, TrainConfig, CHECKPOINT_DIR, CONFIG_FILE, FINAL_CHECKPOINT,
    LAST_GOOD_CHECKPOINT, LOSS_FILE,
};
use crate::viewnet::{checkpoint, model_grad_check, AngleQuery, ViewNet, ViewNetConfig};

pub(super) fn dispatch(cmd: &Command) -> Result<Status> {
    match cmd {
        Command::RenderDataset(a) => render_dataset(a),
        Command::Train(a) => train_command(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Info(a) => info(a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Creates `dir`, refusing a non-empty one unless `force` is set.
fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    let non_empty = match fs::read_dir(dir) {
        Ok(mut it) => it.next().is_some(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(Error::io(dir, e)),
    };
    if non_empty && !force {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parse_grid(s: &str) -> Result<GridSpec> {
    match s {
        "training" => Ok(GridSpec::TRAINING),
        "evaluation" => Ok(GridSpec::EVALUATION),
        other => GridSpec::parse(other),
    }
}

fn render_dataset(a: &RenderDatasetArgs) -> Result<Status> {
    let classes = a
        .classes
        .iter()
        .map(|c| c.trim().parse())
        .collect::<Result<Vec<ShapeClass>>>()?;
    let mut spec = DatasetSpec::new(classes, a.instances, parse_grid(&a.grid)?, a.size);
    spec.first_seed = a.first_seed;
    let t = Instant::now();
    let manifest = generate_dataset(&spec, &a.out, a.force)?;
    println!(
        "wrote {} views ({} classes x {} instances x {} poses) to {} in {:.1?}",
        manifest.records.len(),
        spec.classes.len(),
        spec.instances_per_class,
        manifest.records.len() / (spec.classes.len() * spec.instances_per_class),
        a.out.display(),
        t.elapsed()
    );
    Ok(Status::Ok)
}

/// Effective training and architecture settings: config file first, flags
/// on top. Keys outside the `train.` and `viewnet.` sections are rejected.
fn train_settings(a: &TrainArgs) -> Result<(TrainConfig, ViewNetConfig)> {
    let doc = match &a.config {
        Some(path) => KvDoc::parse(&read_text(path)?)?,
        None => KvDoc::new(),
    };
    if let Some((k, _)) = doc
        .entries()
        .find(|(k, _)| !k.starts_with("train.") && !k.starts_with("viewnet."))
    {
        return Err(Error::Config(format!("unknown config key `{k}`")));
    }
    let mut cfg = TrainConfig::from_kv(&doc)?;
    let net_section = doc.section("viewnet");
    let net_cfg = match (&a.model, net_section.is_empty()) {
        (Some(m), _) => ViewNetConfig::preset(m)?,
        (None, true) => ViewNetConfig::default(),
        (None, false) => ViewNetConfig::from_kv(&net_section)?,
    };
    if let Some(v) = a.iters {
        cfg.iterations = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.optimizer.learning_rate = v;
    }
    if let Some(v) = a.holdout {
        cfg.holdout = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    cfg.validate()?;
    net_cfg.validate()?;
    Ok((cfg, net_cfg))
}

fn train_command(a: &TrainArgs) -> Result<Status> {
    let class: ShapeClass = a.class.parse()?;
    let (cfg, net_cfg) = train_settings(a)?;
    let manifest = DatasetManifest::load(&a.data)?;
    let views = ClassViews::load(&manifest, &a.data, class)?;
    prepare_out(&a.out, a.force)?;
    for stale in [
        CHECKPOINT_DIR,
        LOSS_FILE,
        CONFIG_FILE,
        FINAL_CHECKPOINT,
        LAST_GOOD_CHECKPOINT,
    ] {
        let p = a.out.join(stale);
        let _ = if p.is_dir() {
            fs::remove_dir_all(&p)
        } else {
            fs::remove_file(&p)
        };
    }
    let net = ViewNet::<f32>::build(net_cfg, cfg.seed)?;
    eprintln!(
        "training {class}: {} instances x {} views, {} parameters, {} iterations of {} pairs",
        views.instances.len(),
        views.instances.first().map_or(0, |i| i.views.len()),
        net.param_count(),
        cfg.iterations,
        cfg.batch_size
    );
    let t = Instant::now();
    let every = a.log_every.max(1);
    let outcome = train(net, &views, &cfg, Some(&a.out), &mut |r| {
        if r.iteration % every == 0 || r.iteration == 1 {
            eprintln!(
                "iter {:>6}  total {:.6}  rgb {:.6}  depth {:.6}  {:.1?}",
                r.iteration,
                r.total,
                r.rgb,
                r.depth,
                t.elapsed()
            );
        }
    })?;
    println!(
        "trained {class} in {:.1?}; {} held-out instances; model at {}",
        t.elapsed(),
        outcome.split.holdout.len(),
        a.out.join(FINAL_CHECKPOINT).display()
    );
    Ok(Status::Ok)
}

fn parse_angles(items: &[String]) -> Result<Vec<AngleQuery>> {
    items
        .iter()
        .map(|item| {
            let bad =
                || Error::InvalidArgument(format!("bad angle `{item}` (use yaw or yaw/pitch)"));
            let mut parts = item.trim().split('/');
            let yaw: f64 = parts
                .next()
                .ok_or_else(bad)?
                .trim()
                .parse()
                .map_err(|_| bad())?;
            let pitch: f64 = match parts.next() {
                Some(p) => p.trim().parse().map_err(|_| bad())?,
                None => 0.0,
            };
            if parts.next().is_some() || !yaw.is_finite() || !pitch.is_finite() {
                return Err(bad());
            }
            Ok(AngleQuery::new(yaw, pitch))
        })
        .collect()
}

fn parse_sweep(s: &str) -> Result<Vec<AngleQuery>> {
    let bad = || Error::InvalidArgument(format!("bad sweep `{s}` (use start:end:step)"));
    let nums: Vec<f64> = s
        .split(':')
        .map(|v| v.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = nums[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || !(end > start) {
        return Err(bad());
    }
    let n = ((end - start) / step - 1e-9).ceil() as usize;
    Ok((0..n)
        .map(|k| AngleQuery::new(start + k as f64 * step, 0.0))
        .collect())
}

/// Loads the image and turns the object into a `[4, size, size]` input.
fn extract_input(a: &GenerateArgs, size: usize) -> Result<Tensor<f32>> {
    let img = load_png(&a.input)?;
    if img.shape()[0] != 3 {
        return Err(Error::Image(format!(
            "{} must be an RGB image",
            a.input.display()
        )));
    }
    let (h, w) = (img.shape()[1], img.shape()[2]);
    if let Some(mask_path) = &a.mask {
        let m = load_png(mask_path)?;
        if m.shape()[1..] != [h, w] {
            return Err(Error::InvalidCrop(format!(
                "mask is {}x{} but the image is {h}x{w}",
                m.shape()[1],
                m.shape()[2]
            )));
        }
        let mask: Vec<f32> = m.data()[..h * w]
            .iter()
            .map(|&v| (v > 0.5) as u8 as f32)
            .collect();
        let mask = Tensor::from_vec(&[1, h, w], mask)?;
        let (y, x, bh, bw) = mask_bbox(&mask)
            .ok_or_else(|| Error::InvalidCrop("the mask has no object pixels".into()))?;
        normalize_crop(
            &crop(&img, y, x, bh, bw)?,
            &crop(&mask, y, x, bh, bw)?,
            size,
        )
    } else {
        let d = img.data();
        let background = [d[0], d[h * w], d[2 * h * w]];
        let dets = segment_background_threshold(&img, background, a.tolerance, Some(&a.class))?;
        let det = dets
            .iter()
            .max_by_key(|d| d.area())
            .ok_or_else(|| Error::InvalidCrop("no object found on the background".into()))?;
        detection_input(&img, det, size)
    }
}

fn generate(a: &GenerateArgs) -> Result<Status> {
    let queries = match &a.sweep {
        Some(s) => parse_sweep(s)?,
        None => parse_angles(&a.angles)?,
    };
    let registry = ModelRegistry::load(&a.registry)?;
    let model_class = a.override_class.as_deref().unwrap_or(&a.class);
    let size = registry
        .get(model_class)
        .ok_or_else(|| Error::NoModel(model_class.to_string()))?
        .model
        .config()
        .input_size;
    let input = extract_input(a, size)?;
    let views = cross_class_generate(
        &input,
        &a.class,
        &registry,
        a.override_class.as_deref(),
        &queries,
    )?;
    prepare_out(&a.out, a.force)?;
    let rgb = Tensor::from_vec(&[3, size, size], input.data()[..3 * size * size].to_vec())?;
    let mask = Tensor::from_vec(&[1, size, size], input.data()[3 * size * size..].to_vec())?;
    save_png(&rgb, BitDepth::Eight, &a.out.join("input_rgb.png"))?;
    save_png(&mask, BitDepth::Eight, &a.out.join("input_mask.png"))?;
    let files = write_sequence(&a.out, &views)?;
    let mut index = format!(
        "# class={} generator={}\nframe,delta_yaw,delta_pitch,rgb,depth\n",
        a.class, model_class
    );
    for (i, (q, (rgb, depth))) in queries.iter().zip(&files).enumerate() {
        let name = |p: &Path| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        let _ = writeln!(
            index,
            "{i},{},{},{},{}",
            q.delta_yaw,
            q.delta_pitch,
            name(rgb),
            name(depth)
        );
    }
    write_file(&a.out.join("index.csv"), index)?;
    println!(
        "generated {} views of a {} with the {model_class} generator into {}",
        views.len(),
        a.class,
        a.out.display()
    );
    Ok(Status::Ok)
}

/// `k` input poses spread evenly over `poses`.
fn spread(poses: &[CameraPose], k: usize) -> Vec<CameraPose> {
    (0..k.min(poses.len()))
        .map(|i| poses[(2 * i + 1) * poses.len() / (2 * k)])
        .collect()
}

fn evaluate(a: &EvaluateArgs) -> Result<Status> {
    let manifest = DatasetManifest::load(&a.data)?;
    let spec = &manifest.spec;
    let registry = match (&a.registry, a.oracle) {
        (_, true) => None,
        (Some(p), false) => Some(ModelRegistry::load(p)?),
        (None, false) => return Err(Error::Config("--registry is required".into())),
    };
    if let Some(reg) = &registry {
        for c in &spec.classes {
            if reg.get(c.name()).is_none() {
                return Err(Error::Config(format!(
                    "the dataset has class `{c}` but the registry has no model for it"
                )));
            }
        }
        if let Some(extra) = reg
            .classes()
            .find(|r| !spec.classes.iter().any(|c| c.name() == *r))
        {
            return Err(Error::Config(format!(
                "the registry has a model for `{extra}` which the dataset does not contain"
            )));
        }
        for c in &spec.classes {
            let s = reg
                .get(c.name())
                .expect("checked")
                .model
                .config()
                .input_size;
            if s != spec.size {
                return Err(Error::Config(format!(
                    "the {c} model takes {s} px inputs but the dataset is {} px",
                    spec.size
                )));
            }
        }
    }
    if a.inputs_per_instance == 0 {
        return Err(Error::InvalidArgument(
            "--inputs-per-instance must be at least 1".into(),
        ));
    }
    let with_camera = |p: CameraPose| CameraPose {
        distance: spec.distance,
        fov: spec.fov,
        ..p
    };
    let references: Vec<CameraPose> = parse_grid(&a.grid)?
        .poses()?
        .into_iter()
        .map(with_camera)
        .collect();
    let inputs = spread(&spec.poses()?, a.inputs_per_instance);
    let seeds: Vec<u64> = spec.seeds().collect();
    let split = split_instances(seeds.len(), a.holdout);
    let held: Vec<u64> = split.holdout.iter().map(|&i| seeds[i]).collect();

    prepare_out(&a.out, a.force)?;
    let mut report = EvalReport {
        classes: Vec::new(),
    };
    let mut continuity = String::from("class,frames,max_step,mean_step,max_over_mean\n");
    for &class in &spec.classes {
        let t = Instant::now();
        let set = EvalSet::render(class, &held, &inputs, &references, spec.size)?;
        let net = registry
            .as_ref()
            .map(|r| &r.get(class.name()).expect("checked").model);
        let generator: &dyn ViewGenerator = match net {
            Some(n) => n,
            None => &OracleGenerator,
        };
        let eval: Evaluation = evaluate_model(generator, &set)?;
        let row = eval.report()?;
        eprintln!(
            "{class}: {} pairs, rgb {:.2}%, depth {:.2}% ({:.1?})",
            row.pairs,
            row.acc_rgb,
            row.acc_depth,
            t.elapsed()
        );
        report.classes.push(row);

        let curve = rotation_curve(&eval)?;
        let name = class.name();
        write_file(&a.out.join(format!("rotation_{name}.csv")), curve.to_csv())?;
        for (depth, tag) in [(false, "rgb"), (true, "depth")] {
            write_file(
                &a.out.join(format!("rotation_{name}_{tag}_grid.csv")),
                curve.to_grid_csv(depth),
            )?;
            save_png(
                &curve.heatmap(depth, 4)?,
                BitDepth::Eight,
                &a.out.join(format!("rotation_{name}_{tag}.png")),
            )?;
        }

        if let Some(net) = net {
            let input = set.instances[0].inputs[0].input();
            let c = continuity_score(net, &input, a.continuity_step)?;
            let _ = writeln!(
                continuity,
                "{name},{},{:.4},{:.4},{:.4}",
                c.frames.len(),
                c.max,
                c.mean,
                c.max / c.mean
            );
            let mut steps = String::from("yaw,distance_from_previous\n");
            for (y, d) in c.yaws.iter().skip(1).zip(&c.distances) {
                let _ = writeln!(steps, "{y},{d:.4}");
            }
            write_file(&a.out.join(format!("continuity_{name}.csv")), steps)?;
        }
    }
    let csv = report.to_csv();
    write_file(&a.out.join("report.csv"), &csv)?;
    if registry.is_some() {
        write_file(&a.out.join("continuity.csv"), continuity)?;
    }
    print!("{csv}");
    Ok(Status::Ok)
}

fn gradcheck(a: &GradcheckArgs) -> Result<Status> {
    let cfg = ViewNetConfig::preset(&a.model)?;
    if a.seeds == 0 {
        return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
    }
    let mut worst = 0.0f64;
    for seed in 1..=a.seeds {
        let r = model_grad_check(&cfg, seed, a.eps)?;
        println!(
            "seed {seed}: max_rel_error {:.3e} over {} coordinates (worst {})",
            r.max_rel_error, r.coordinates, r.worst_param
        );
        worst = if r.max_rel_error.is_nan() {
            f64::NAN
        } else {
            worst.max(r.max_rel_error)
        };
    }
    let pass = worst <= a.tolerance;
    println!(
        "max_rel_error {worst:.3e} tolerance {:.1e} {}",
        a.tolerance,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass {
        Status::Ok
    } else {
        Status::VerificationFailed
    })
}

fn info(a: &InfoArgs) -> Result<Status> {
    let bytes = fs::read(&a.checkpoint).map_err(|e| Error::io(&a.checkpoint, e))?;
    let raw = checkpoint::parse_bytes::<f32>(&bytes)?;
    let net = checkpoint::from_bytes::<f32>(&bytes)?;
    println!("file = {}", a.checkpoint.display());
    println!("format_version = {}", checkpoint::FORMAT_VERSION);
    println!("bytes = {}", bytes.len());
    println!("parameters = {}", net.param_count());
    print!("{}", raw.config.render());
    println!("[tensors]");
    for (name, t) in &raw.tensors {
        println!("{name}\t{:?}", t.shape());
    }
    Ok(Status::Ok)
}
