use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::optim::{adam_step, clip_gradients, AdamState};
use super::pairs::{sample_pairs, split_instances, InstanceSplit};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::render::ClassViews;
use crate::tensor::{NormMode, Tape};
use crate::viewnet::{save_checkpoint, ParamMap, ViewNet};

pub const LOSS_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "train_config.txt";
pub const FINAL_CHECKPOINT: &str = "model.vfck";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.vfck";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Losses of one batch update, measured before the update is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based.
    pub iteration: usize,
    pub rgb: f64,
    pub depth: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub batch_size: usize,
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# one iteration = one batch update of {} pairs\niteration,rgb_loss,depth_loss,total\n",
            self.batch_size
        );
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.iteration, r.rgb, r.depth, r.total);
        }
        out
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ViewNet<f32>,
    pub trace: LossTrace,
    pub split: InstanceSplit,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Effective settings of a run, written next to its outputs.
pub fn run_description(
    net: &ViewNet<f32>,
    views: &ClassViews,
    split: &InstanceSplit,
    config: &TrainConfig,
) -> KvDoc {
    let mut doc = KvDoc::new();
    doc.set("data.class", views.class.name());
    let seeds = |idx: &[usize]| -> Vec<u64> {
        idx.iter()
            .map(|&i| views.instances[i].instance.seed)
            .collect()
    };
    doc.set_list("data.train_instances", &seeds(&split.train));
    doc.set_list("data.holdout_instances", &seeds(&split.holdout));
    doc.merge(&config.to_kv());
    doc.merge(&net.config().to_kv());
    doc
}

/// Trains `net` on the non-held-out instances of `views`.
///
/// Each iteration samples one batch of within-instance pairs, minimizes the
/// weighted sum of RGB and depth MSE, clamps every gradient entry to the
/// clip range and takes an Adam step. With `out_dir`, the effective config,
/// the loss trace, periodic checkpoints and the final model are written
/// there. If the loss stops being finite the run aborts with
/// [`Error::Divergence`], saving the last good state to
/// [`LAST_GOOD_CHECKPOINT`] when an output directory is given.
///
/// Results depend only on the inputs and `config.seed`.
pub fn train(
    mut net: ViewNet<f32>,
    views: &ClassViews,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    on_iteration: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let split = split_instances(views.instances.len(), config.holdout);
    if split.train.is_empty() {
        return Err(Error::EmptyClass(views.class.name().to_string()));
    }
    let expected = net.config().input_size;
    if let Some(v) = views.instances.iter().flat_map(|i| i.views.first()).next() {
        if v.rgb.shape()[1] != expected {
            return Err(Error::Config(format!(
                "views are {} px but the network expects {expected} px",
                v.rgb.shape()[1]
            )));
        }
    }
    let checkpoint_dir: Option<PathBuf> = out_dir.map(|d| d.join(CHECKPOINT_DIR));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(
            &dir.join(CONFIG_FILE),
            run_description(&net, views, &split, config)
                .render()
                .as_bytes(),
        )?;
        if config.checkpoint_every > 0 {
            let cd = checkpoint_dir.as_ref().expect("set with out_dir");
            fs::create_dir_all(cd).map_err(|e| Error::io(cd, e))?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(net.params());
    let mut trace = LossTrace {
        batch_size: config.batch_size,
        records: Vec::with_capacity(config.iterations),
    };
    for iteration in 1..=config.iterations {
        let batch = sample_pairs(views, &split.train, config.batch_size, &mut rng)?;
        let norm_before = net.norm_states().clone();

        let mut tape = Tape::new();
        let vars = net.bind(&mut tape, true);
        let x = tape.constant(batch.inputs);
        let a = tape.constant(ViewNet::<f32>::angle_tensor(&batch.queries)?);
        let t_rgb = tape.constant(batch.target_rgb);
        let t_depth = tape.constant(batch.target_depth);
        let loss = net.loss_tape(
            &mut tape,
            &vars,
            x,
            a,
            t_rgb,
            t_depth,
            config.loss_weights,
            NormMode::Train,
        )?;
        let record = LossRecord {
            iteration,
            rgb: tape.value(loss.rgb).data()[0] as f64,
            depth: tape.value(loss.depth).data()[0] as f64,
            total: tape.value(loss.total).data()[0] as f64,
        };
        if !record.total.is_finite() {
            if let Some(dir) = out_dir {
                let good =
                    ViewNet::from_parts(net.config().clone(), net.params().clone(), norm_before)?;
                save_checkpoint(&good, &dir.join(LAST_GOOD_CHECKPOINT))?;
                write_file(&dir.join(LOSS_FILE), trace.to_csv().as_bytes())?;
            }
            return Err(Error::Divergence {
                iteration,
                loss: record.total,
            });
        }
        tape.backward(loss.total)?;
        let mut grads: ParamMap<f32> = vars
            .iter()
            .map(|(name, &v)| {
                let g = tape.take_grad(v).ok_or_else(|| {
                    Error::InvalidArgument(format!("no gradient reached `{name}`"))
                })?;
                Ok((name.clone(), g))
            })
            .collect::<Result<_>>()?;
        drop(tape);
        clip_gradients(&mut grads, config.clip_range);
        adam_step(net.params_mut(), &grads, &mut adam, &config.optimizer)?;

        on_iteration(&record);
        trace.records.push(record);
        if let Some(cd) = &checkpoint_dir {
            if config.checkpoint_every > 0 && iteration % config.checkpoint_every == 0 {
                save_checkpoint(&net, &cd.join(format!("iter_{iteration:06}.vfck")))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        write_file(&dir.join(LOSS_FILE), trace.to_csv().as_bytes())?;
        save_checkpoint(&net, &dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome { net, trace, split })
}
