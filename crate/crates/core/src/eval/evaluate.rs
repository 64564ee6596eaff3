use std::fmt::Write as _;

use rayon::prelude::*;

use super::generator::{GeneratedView, ViewGenerator, ViewRequest};
use super::metrics::{image_accuracy, image_error, mean_std};
use crate::error::{Error, Result};
use crate::render::{make_instance, rasterize, wrap_degrees, CameraPose, ShapeClass, ViewSample};
use crate::tensor::Tensor;
use crate::viewnet::AngleQuery;

/// Input views of one instance and the reference views they are scored
/// against.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub inputs: Vec<ViewSample>,
    pub references: Vec<ViewSample>,
}

/// Everything needed to score one class.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub class: ShapeClass,
    pub instances: Vec<EvalInstance>,
}

impl EvalSet {
    /// Renders `input_poses` and `reference_poses` of each instance seed.
    pub fn render(
        class: ShapeClass,
        seeds: &[u64],
        input_poses: &[CameraPose],
        reference_poses: &[CameraPose],
        size: usize,
    ) -> Result<Self> {
        let instances = seeds
            .iter()
            .map(|&seed| {
                let inst = make_instance(class, seed);
                let draw = |poses: &[CameraPose]| -> Result<Vec<ViewSample>> {
                    poses
                        .par_iter()
                        .map(|p| rasterize(&inst, p, size))
                        .collect()
                };
                Ok(EvalInstance {
                    inputs: draw(input_poses)?,
                    references: draw(reference_poses)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalSet { class, instances })
    }

    pub fn pair_count(&self) -> usize {
        self.instances
            .iter()
            .map(|i| i.inputs.len() * i.references.len())
            .sum()
    }
}

/// Relative rotation wrapped to `(-180, 180]`.
pub fn signed_delta(to: f64, from: f64) -> f64 {
    let d = wrap_degrees(to - from);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Score of one generated view against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub instance_seed: u64,
    pub input_pose: (f64, f64),
    pub target_pose: (f64, f64),
    /// Target minus input pitch.
    pub delta_pitch: f64,
    /// Target minus input yaw, in `(-180, 180]`.
    pub delta_yaw: f64,
    pub e_rgb: f64,
    pub e_depth: f64,
}

/// Per-pair scores of one class, in deterministic order.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub class: ShapeClass,
    pub scores: Vec<PairScore>,
}

/// One column of the per-class table: mean error, spread of the per-image
/// errors, and the accuracy of the mean error.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: String,
    pub pairs: usize,
    pub e_rgb: f64,
    pub std_rgb: f64,
    pub acc_rgb: f64,
    pub e_depth: f64,
    pub std_depth: f64,
    pub acc_depth: f64,
}

impl Evaluation {
    pub fn report(&self) -> Result<ClassReport> {
        let rgb: Vec<f64> = self.scores.iter().map(|s| s.e_rgb).collect();
        let depth: Vec<f64> = self.scores.iter().map(|s| s.e_depth).collect();
        let (e_rgb, std_rgb) = mean_std(&rgb);
        let (e_depth, std_depth) = mean_std(&depth);
        Ok(ClassReport {
            class: self.class.name().to_string(),
            pairs: self.scores.len(),
            e_rgb,
            std_rgb,
            acc_rgb: image_accuracy(e_rgb)?,
            e_depth,
            std_depth,
            acc_depth: image_accuracy(e_depth)?,
        })
    }
}

/// Generates every reference view of every instance from every input view
/// of that instance and scores RGB and depth separately.
pub fn evaluate_model<G: ViewGenerator + ?Sized>(
    generator: &G,
    set: &EvalSet,
) -> Result<Evaluation> {
    let empty = || Error::EmptyHoldout(set.class.name().to_string());
    if set.pair_count() == 0 {
        return Err(empty());
    }
    let jobs: Vec<(&EvalInstance, &ViewSample)> = set
        .instances
        .iter()
        .flat_map(|inst| inst.inputs.iter().map(move |v| (inst, v)))
        .collect();
    let per_input: Vec<Vec<PairScore>> = jobs
        .par_iter()
        .map(|(inst, input)| score_input(generator, input, &inst.references))
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        class: set.class,
        scores: per_input.into_iter().flatten().collect(),
    })
}

fn score_input<G: ViewGenerator + ?Sized>(
    generator: &G,
    input: &ViewSample,
    references: &[ViewSample],
) -> Result<Vec<PairScore>> {
    let (ip, iy) = (input.pose.pitch, input.pose.yaw);
    let requests: Vec<ViewRequest> = references
        .iter()
        .map(|r| ViewRequest {
            query: AngleQuery::new(r.pose.yaw - iy, r.pose.pitch - ip),
            reference: Some(r),
        })
        .collect();
    let generated = generator.generate(&input.input(), &requests)?;
    if generated.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "generator returned {} views for {} requests",
            generated.len(),
            references.len()
        )));
    }
    generated
        .iter()
        .zip(references)
        .map(|(g, r)| {
            Ok(PairScore {
                instance_seed: input.instance.seed,
                input_pose: (ip, iy),
                target_pose: (r.pose.pitch, r.pose.yaw),
                delta_pitch: r.pose.pitch - ip,
                delta_yaw: signed_delta(r.pose.yaw, iy),
                e_rgb: image_error(&g.rgb, &r.rgb)?,
                e_depth: image_error(&g.depth, &r.depth)?,
            })
        })
        .collect()
}

/// Per-class reports plus their average, laid out like a results table:
/// one row per metric, one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
}

impl EvalReport {
    /// Column-wise mean of the class reports.
    pub fn average(&self) -> ClassReport {
        let n = self.classes.len().max(1) as f64;
        let avg = |f: fn(&ClassReport) -> f64| self.classes.iter().map(f).sum::<f64>() / n;
        ClassReport {
            class: "average".into(),
            pairs: self.classes.iter().map(|c| c.pairs).sum(),
            e_rgb: avg(|c| c.e_rgb),
            std_rgb: avg(|c| c.std_rgb),
            acc_rgb: avg(|c| c.acc_rgb),
            e_depth: avg(|c| c.e_depth),
            std_depth: avg(|c| c.std_depth),
            acc_depth: avg(|c| c.acc_depth),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut cols = self.classes.clone();
        cols.push(self.average());
        let mut out = String::from("metric");
        for c in &cols {
            out.push(',');
            out.push_str(&c.class);
        }
        out.push('\n');
        let rows: [(&str, fn(&ClassReport) -> String); 7] = [
            ("pairs", |c| c.pairs.to_string()),
            ("e_rgb_px", |c| format!("{:.4}", c.e_rgb)),
            ("std_rgb_px", |c| format!("{:.4}", c.std_rgb)),
            ("acc_rgb_pct", |c| format!("{:.4}", c.acc_rgb)),
            ("e_depth_px", |c| format!("{:.4}", c.e_depth)),
            ("std_depth_px", |c| format!("{:.4}", c.std_depth)),
            ("acc_depth_pct", |c| format!("{:.4}", c.acc_depth)),
        ];
        for (name, f) in rows {
            out.push_str(name);
            for c in &cols {
                let _ = write!(out, ",{}", f(c));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-bin accumulation of accuracies over relative rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationBin {
    pub delta_pitch: f64,
    pub delta_yaw: f64,
    pub count: usize,
    pub sum_acc_rgb: f64,
    pub sum_acc_depth: f64,
}

impl RotationBin {
    pub fn acc_rgb(&self) -> f64 {
        self.sum_acc_rgb / self.count as f64
    }

    pub fn acc_depth(&self) -> f64 {
        self.sum_acc_depth / self.count as f64
    }
}

/// Mean per-image accuracy for each distinct relative rotation
/// `(delta_pitch, delta_yaw)` that occurs in an evaluation. Every scored
/// pair lands in exactly one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationCurve {
    /// Sorted by pitch, then yaw.
    pub bins: Vec<RotationBin>,
}

/// Band statistics returned by [`RotationCurve::yaw_band`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandAccuracy {
    pub count: usize,
    pub acc_rgb: f64,
    pub acc_depth: f64,
}

fn bin_key(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

pub fn rotation_curve(eval: &Evaluation) -> Result<RotationCurve> {
    let mut bins: std::collections::BTreeMap<(i64, i64), RotationBin> = Default::default();
    for s in &eval.scores {
        let bin = bins
            .entry((bin_key(s.delta_pitch), bin_key(s.delta_yaw)))
            .or_insert_with(|| RotationBin {
                delta_pitch: s.delta_pitch,
                delta_yaw: s.delta_yaw,
                count: 0,
                sum_acc_rgb: 0.0,
                sum_acc_depth: 0.0,
            });
        bin.count += 1;
        bin.sum_acc_rgb += image_accuracy(s.e_rgb)?;
        bin.sum_acc_depth += image_accuracy(s.e_depth)?;
    }
    Ok(RotationCurve {
        bins: bins.into_values().collect(),
    })
}

impl RotationCurve {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Pair-weighted mean accuracy over all bins with `lo <= |delta_yaw| <= hi`,
    /// any pitch. `None` if no pair falls in the band.
    pub fn yaw_band(&self, lo: f64, hi: f64) -> Option<BandAccuracy> {
        let mut acc = BandAccuracy {
            count: 0,
            acc_rgb: 0.0,
            acc_depth: 0.0,
        };
        for b in self
            .bins
            .iter()
            .filter(|b| (lo..=hi).contains(&b.delta_yaw.abs()))
        {
            acc.count += b.count;
            acc.acc_rgb += b.sum_acc_rgb;
            acc.acc_depth += b.sum_acc_depth;
        }
        (acc.count > 0).then(|| BandAccuracy {
            acc_rgb: acc.acc_rgb / acc.count as f64,
            acc_depth: acc.acc_depth / acc.count as f64,
            ..acc
        })
    }

    fn axes(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pitches: Vec<f64> = self.bins.iter().map(|b| b.delta_pitch).collect();
        let mut yaws: Vec<f64> = self.bins.iter().map(|b| b.delta_yaw).collect();
        for v in [&mut pitches, &mut yaws] {
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| bin_key(*a) == bin_key(*b));
        }
        (pitches, yaws)
    }

    fn lookup(&self, pitch: f64, yaw: f64) -> Option<&RotationBin> {
        self.bins.iter().find(|b| {
            bin_key(b.delta_pitch) == bin_key(pitch) && bin_key(b.delta_yaw) == bin_key(yaw)
        })
    }

    /// Long format: one line per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta_pitch,delta_yaw,count,acc_rgb,acc_depth\n");
        for b in &self.bins {
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{:.4}",
                b.delta_pitch,
                b.delta_yaw,
                b.count,
                b.acc_rgb(),
                b.acc_depth()
            );
        }
        out
    }

    /// Grid format for plotting: rows are delta pitch, columns delta yaw,
    /// empty cells where no pair was scored.
    pub fn to_grid_csv(&self, depth: bool) -> String {
        let (pitches, yaws) = self.axes();
        let mut out = String::from("delta_pitch\\delta_yaw");
        for y in &yaws {
            let _ = write!(out, ",{y}");
        }
        out.push('\n');
        for p in &pitches {
            let _ = write!(out, "{p}");
            for y in &yaws {
                match self.lookup(*p, *y) {
                    Some(b) => {
                        let v = if depth { b.acc_depth() } else { b.acc_rgb() };
                        let _ = write!(out, ",{v:.4}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Grayscale heat map `[1, rows * cell, cols * cell]`, brightest at the
    /// best bin; empty cells are black.
    pub fn heatmap(&self, depth: bool, cell: usize) -> Result<Tensor<f32>> {
        let (pitches, yaws) = self.axes();
        let value = |b: &RotationBin| if depth { b.acc_depth() } else { b.acc_rgb() };
        let (lo, hi) = self
            .bins
            .iter()
            .map(value)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                (l.min(v), h.max(v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        let cell = cell.max(1);
        let (h, w) = (pitches.len() * cell, yaws.len() * cell);
        let mut data = vec![0.0f32; h * w];
        for (r, p) in pitches.iter().enumerate() {
            for (c, y) in yaws.iter().enumerate() {
                if let Some(b) = self.lookup(*p, *y) {
                    let v = (0.1 + 0.9 * (value(b) - lo) / span) as f32;
                    for dy in 0..cell {
                        let row = (r * cell + dy) * w + c * cell;
                        data[row..row + cell].fill(v);
                    }
                }
            }
        }
        Tensor::from_vec(&[1, h, w], data)
    }
}

/// Outcome of a full yaw sweep from one input view.
#[derive(Debug, Clone)]
pub struct ContinuityScore {
    /// Requested relative yaws, from 0 to 360 inclusive.
    pub yaws: Vec<f64>,
    pub frames: Vec<GeneratedView>,
    /// Mean absolute RGB-D difference (0-255 scale) between consecutive frames.
    pub distances: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

/// Generates the sweep `0, step, ..., 360` of relative yaw at zero relative
/// pitch and measures how far each frame moves from the previous one. A
/// 6 degree step over a 12 degree training grid interleaves seen and unseen
/// angles.
pub fn continuity_score<G: ViewGenerator + ?Sized>(
    generator: &G,
    input: &Tensor<f32>,
    yaw_step: f64,
) -> Result<ContinuityScore> {
    let steps = 360.0 / yaw_step;
    if !(yaw_step > 0.0) || (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "yaw step {yaw_step} must be positive and divide 360"
        )));
    }
    let yaws: Vec<f64> = (0..=steps.round() as usize)
        .map(|k| k as f64 * yaw_step)
        .collect();
    let requests: Vec<ViewRequest> = yaws
        .iter()
        .map(|&y| ViewRequest {
            query: AngleQuery::new(y, 0.0),
            reference: None,
        })
        .collect();
    let frames = generator.generate(input, &requests)?;
    let distances = frames
        .windows(2)
        .map(|w| image_error(&w[1].rgbd(), &w[0].rgbd()))
        .collect::<Result<Vec<f64>>>()?;
    let max = distances.iter().copied().fold(0.0, f64::max);
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    Ok(ContinuityScore {
        yaws,
        frames,
        distances,
        max,
        mean,
    })
}
