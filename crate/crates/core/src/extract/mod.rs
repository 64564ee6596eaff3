//! Scene front end: find objects on a uniform background, normalize each crop
//! to the generator's square input, and pick the generator for its class.

mod crop;
mod registry;
mod segment;

pub use crop::{normalize_crop, CropGeometry};
pub use registry::{route, ModelRegistry, RegistryEntry};
pub use segment::{foreground_mask, segment_background_threshold, BBox, Detection, UNKNOWN_LABEL};

use crate::error::Result;
use crate::image::crop;
use crate::tensor::Tensor;

/// Cuts a detection out of the scene and normalizes it to `[4, S, S]`.
pub fn detection_input(scene: &Tensor<f32>, det: &Detection, size: usize) -> Result<Tensor<f32>> {
    let b = det.bbox;
    let rgb = crop(scene, b.y, b.x, b.height, b.width)?;
    normalize_crop(&rgb, &det.mask, size)
}
