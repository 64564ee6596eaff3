use rand::Rng;

use crate::error::{Error, Result};
use crate::render::ClassViews;
use crate::tensor::Tensor;
use crate::viewnet::AngleQuery;

/// Instances used for training and those held out, as indices into
/// [`ClassViews::instances`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceSplit {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// Holds out the last `round(n * fraction)` instances. Any positive fraction
/// holds out at least one instance and at least one is always kept for
/// training. Instance seeds carry no meaning, so taking the tail is as good
/// as a random draw and lets evaluation rebuild the split from the dataset
/// alone.
pub fn split_instances(n: usize, fraction: f64) -> InstanceSplit {
    let mut k = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        k = k.max(1);
    }
    let k = k.min(n.saturating_sub(1));
    InstanceSplit {
        train: (0..n - k).collect(),
        holdout: (n - k..n).collect(),
    }
}

/// Which views one training pair uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    pub instance: usize,
    pub input_view: usize,
    pub target_view: usize,
}

/// A stacked batch of (input view, relative rotation, target view) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    /// `[B, 4, S, S]`: RGB and mask of the input view.
    pub inputs: Tensor<f32>,
    pub queries: Vec<AngleQuery>,
    /// `[B, 3, S, S]`
    pub target_rgb: Tensor<f32>,
    /// `[B, 1, S, S]`
    pub target_depth: Tensor<f32>,
    /// Instance seed the input view was rendered from, per pair.
    pub input_instances: Vec<u64>,
    /// Instance seed the target view was rendered from, per pair.
    pub target_instances: Vec<u64>,
    pub indices: Vec<PairIndex>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Draws `batch_size` pair indices: an instance uniformly from `instances`,
/// then two poses of it uniformly and independently (equal poses allowed).
pub fn sample_pair_indices<R: Rng>(
    views: &ClassViews,
    instances: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<PairIndex>> {
    let usable: Vec<usize> = instances
        .iter()
        .copied()
        .filter(|&i| {
            views
                .instances
                .get(i)
                .is_some_and(|iv| !iv.views.is_empty())
        })
        .collect();
    if usable.len() != instances.len() || usable.is_empty() {
        return Err(Error::EmptyClass(views.class.name().to_string()));
    }
    Ok((0..batch_size)
        .map(|_| {
            let instance = usable[rng.gen_range(0..usable.len())];
            let n = views.instances[instance].views.len();
            PairIndex {
                instance,
                input_view: rng.gen_range(0..n),
                target_view: rng.gen_range(0..n),
            }
        })
        .collect())
}

/// Stacks the views named by `indices` into a batch. The query of each pair
/// is the target pose minus the input pose.
pub fn assemble_batch(views: &ClassViews, indices: &[PairIndex]) -> Result<PairBatch> {
    let mut inputs = Vec::new();
    let mut rgb = Vec::new();
    let mut depth = Vec::new();
    let mut queries = Vec::with_capacity(indices.len());
    let mut input_instances = Vec::with_capacity(indices.len());
    let mut target_instances = Vec::with_capacity(indices.len());
    let mut size = None;
    for ix in indices {
        let inst = views
            .instances
            .get(ix.instance)
            .ok_or_else(|| Error::InvalidArgument(format!("no instance {}", ix.instance)))?;
        let (a, b) = match (
            inst.views.get(ix.input_view),
            inst.views.get(ix.target_view),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "pair {ix:?} is out of range"
                )))
            }
        };
        let s = a.rgb.shape()[1];
        if *size.get_or_insert(s) != s || b.rgb.shape()[1] != s {
            return Err(Error::InvalidBatch(
                "views of different sizes in one batch".into(),
            ));
        }
        inputs.extend_from_slice(a.rgb.data());
        inputs.extend_from_slice(a.mask.data());
        rgb.extend_from_slice(b.rgb.data());
        depth.extend_from_slice(b.depth.data());
        queries.push(AngleQuery::new(
            b.pose.yaw - a.pose.yaw,
            b.pose.pitch - a.pose.pitch,
        ));
        input_instances.push(a.instance.seed);
        target_instances.push(b.instance.seed);
    }
    let s = size.ok_or_else(|| Error::InvalidBatch("empty batch".into()))?;
    let n = indices.len();
    Ok(PairBatch {
        inputs: Tensor::from_vec(&[n, 4, s, s], inputs)?,
        queries,
        target_rgb: Tensor::from_vec(&[n, 3, s, s], rgb)?,
        target_depth: Tensor::from_vec(&[n, 1, s, s], depth)?,
        input_instances,
        target_instances,
        indices: indices.to_vec(),
    })
}

/// [`sample_pair_indices`] followed by [`assemble_batch`].
pub fn sample_pairs<R: Rng>(
    views: &ClassViews,
    instances: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    let idx = sample_pair_indices(views, instances, batch_size, rng)?;
    assemble_batch(views, &idx)
}
