//! Procedural objects and their multi-view renders.
//!
//! Objects are signed distance fields built from a few primitives (capped
//! cylinders, a torus handle, boxes) with dimensions drawn from per-class
//! ranges. A sphere-tracing ray caster produces RGB, depth and mask images
//! from a camera orbiting the object; [`rasterize`] then crops and normalizes
//! the object exactly as the extractor does for scene images.

mod camera;
mod dataset;
mod raster;
mod shape;
mod vec3;

pub use camera::{angle_grid, wrap_degrees, CameraPose, GridSpec, DEFAULT_DISTANCE, DEFAULT_FOV};
pub use dataset::{
    generate_dataset, ClassViews, DatasetManifest, DatasetSpec, InstanceViews, ManifestRecord,
    MANIFEST_FILE, MANIFEST_VERSION,
};
pub use raster::{
    encode_depth, focal_length_px, frame_to_sample, mask_bbox, rasterize, render_frame,
    render_view, Frame, ViewSample, AMBIENT, FRAME_SCALE, MAX_OBJECT_DEPTH, MIN_SAMPLE_SIZE,
};
pub use shape::{
    make_instance, make_instance_named, Placement, Scene, Sdf, ShapeClass, ShapeInstance,
    ShapeParams, Sphere, NORMALIZED_RADIUS,
};
pub use vec3::Vec3;
