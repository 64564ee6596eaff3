use std::path::{Path, PathBuf};

use crate::error::{shape_err, Error, Result};
use crate::extract::{route, ModelRegistry};
use crate::image::{save_png, BitDepth};
use crate::render::ViewSample;
use crate::tensor::Tensor;
use crate::viewnet::{AngleQuery, ViewNet};

/// One generated RGB `[3, S, S]` and depth `[1, S, S]` image.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedView {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
}

impl GeneratedView {
    /// RGB and depth stacked into `[4, S, S]`.
    pub fn rgbd(&self) -> Tensor<f32> {
        let mut d = self.rgb.data().to_vec();
        d.extend_from_slice(self.depth.data());
        let s = self.rgb.shape()[1];
        Tensor::from_vec(&[4, s, s], d).expect("planes share one size")
    }
}

/// A requested view. The reference is the ground truth for that view when
/// one exists; only test generators look at it.
#[derive(Debug, Clone, Copy)]
pub struct ViewRequest<'a> {
    pub query: AngleQuery,
    pub reference: Option<&'a ViewSample>,
}

/// Anything that turns a `[4, S, S]` input and relative rotations into views.
pub trait ViewGenerator: Sync {
    fn generate(
        &self,
        input: &Tensor<f32>,
        requests: &[ViewRequest<'_>],
    ) -> Result<Vec<GeneratedView>>;
}

/// Queries run through the network per forward pass.
const GENERATION_BATCH: usize = 32;

impl ViewGenerator for ViewNet<f32> {
    fn generate(
        &self,
        input: &Tensor<f32>,
        requests: &[ViewRequest<'_>],
    ) -> Result<Vec<GeneratedView>> {
        let mut out = Vec::with_capacity(requests.len());
        for chunk in requests.chunks(GENERATION_BATCH) {
            let queries: Vec<AngleQuery> = chunk.iter().map(|r| r.query).collect();
            let batch = Tensor::stack(&vec![input; chunk.len()])?;
            let views = ViewNet::generate(self, &batch, &queries)?;
            for i in 0..chunk.len() {
                out.push(GeneratedView {
                    rgb: views.rgb.index_outer(i)?,
                    depth: views.depth.index_outer(i)?,
                });
            }
        }
        Ok(out)
    }
}

/// Returns the reference view itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleGenerator;

impl ViewGenerator for OracleGenerator {
    fn generate(
        &self,
        _input: &Tensor<f32>,
        requests: &[ViewRequest<'_>],
    ) -> Result<Vec<GeneratedView>> {
        requests
            .iter()
            .map(|r| {
                let v = r.reference.ok_or_else(|| {
                    Error::InvalidArgument("the oracle generator needs reference views".into())
                })?;
                Ok(GeneratedView {
                    rgb: v.rgb.clone(),
                    depth: v.depth.clone(),
                })
            })
            .collect()
    }
}

/// Emits the same flat RGB and depth value for every request.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantGenerator {
    pub rgb: f32,
    pub depth: f32,
}

impl ViewGenerator for ConstantGenerator {
    fn generate(
        &self,
        input: &Tensor<f32>,
        requests: &[ViewRequest<'_>],
    ) -> Result<Vec<GeneratedView>> {
        let s = match *input.shape() {
            [_, h, w] if h == w => h,
            ref s => return Err(shape_err!("expected a square [C, S, S] input, got {s:?}")),
        };
        let view = GeneratedView {
            rgb: Tensor::from_vec(&[3, s, s], vec![self.rgb; 3 * s * s])?,
            depth: Tensor::from_vec(&[1, s, s], vec![self.depth; s * s])?,
        };
        Ok(vec![view; requests.len()])
    }
}

/// Runs `input` (of class `label`) through the generator of
/// `override_class`, or of `label` itself when no override is given.
pub fn cross_class_generate(
    input: &Tensor<f32>,
    label: &str,
    registry: &ModelRegistry,
    override_class: Option<&str>,
    queries: &[AngleQuery],
) -> Result<Vec<GeneratedView>> {
    let net = route(label, registry, override_class)?;
    let requests: Vec<ViewRequest> = queries
        .iter()
        .map(|&query| ViewRequest {
            query,
            reference: None,
        })
        .collect();
    ViewGenerator::generate(net, input, &requests)
}

/// Writes `rgb_NNN.png` (8-bit) and `depth_NNN.png` (16-bit) per view and
/// returns the written paths in pairs.
pub fn write_sequence(dir: &Path, views: &[GeneratedView]) -> Result<Vec<(PathBuf, PathBuf)>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let rgb = dir.join(format!("rgb_{i:03}.png"));
            let depth = dir.join(format!("depth_{i:03}.png"));
            save_png(&v.rgb, BitDepth::Eight, &rgb)?;
            save_png(&v.depth, BitDepth::Sixteen, &depth)?;
            Ok((rgb, depth))
        })
        .collect()
}
