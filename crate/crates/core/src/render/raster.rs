use rayon::prelude::*;

use super::camera::CameraPose;
use super::shape::{Sdf, ShapeInstance};
use super::vec3::Vec3;
use crate::error::{Error, Result};
use crate::extract::{normalize_crop, CropGeometry};
use crate::image::crop;
use crate::tensor::Tensor;

/// Ambient share of the shading; the rest is Lambertian from the headlight.
pub const AMBIENT: f64 = 0.25;

/// Largest depth an object pixel may take, kept one 16-bit step below the
/// background value so `mask <=> depth < 1` survives PNG storage.
pub const MAX_OBJECT_DEPTH: f32 = 65534.0 / 65535.0;

/// Training samples are cut from a raw frame this many times larger than the
/// sample size.
pub const FRAME_SCALE: usize = 3;

pub const MIN_SAMPLE_SIZE: usize = 16;

const MAX_STEPS: usize = 192;
const HIT_EPS: f64 = 1e-4;

/// A full camera image: RGB `[3, N, N]`, depth `[1, N, N]`, mask `[1, N, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
    pub mask: Tensor<f32>,
}

/// Maps ray distance `t` to `[0, 1]`: the nearest point of the unit sphere
/// (`distance - 1`) goes to 0, the farthest (`distance + 1`) to 1.
pub fn encode_depth(t: f64, distance: f64) -> f32 {
    (((t - (distance - 1.0)) / 2.0) as f32).clamp(0.0, MAX_OBJECT_DEPTH)
}

struct Hit {
    t: f64,
    shade: f64,
    color: [f64; 3],
}

fn trace<S: Sdf + ?Sized>(shape: &S, eye: Vec3, dir: Vec3, radius: f64) -> Option<Hit> {
    // Clip the ray to the bounding sphere first.
    let b = eye.dot(dir);
    let c = eye.dot(eye) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let (mut t, t_exit) = ((-b - root).max(0.0), -b + root);
    for _ in 0..MAX_STEPS {
        let p = eye + dir * t;
        let d = shape.distance(p);
        if d < HIT_EPS {
            let n = normal(shape, p);
            let lambert = n.dot(-dir).max(0.0);
            return Some(Hit {
                t,
                shade: AMBIENT + (1.0 - AMBIENT) * lambert,
                color: shape.color_at(p),
            });
        }
        t += d;
        if t > t_exit {
            return None;
        }
    }
    None
}

fn normal<S: Sdf + ?Sized>(shape: &S, p: Vec3) -> Vec3 {
    let h = 1e-5;
    let dx = Vec3::new(h, 0.0, 0.0);
    let dy = Vec3::new(0.0, h, 0.0);
    let dz = Vec3::new(0.0, 0.0, h);
    let g = Vec3::new(
        shape.distance(p + dx) - shape.distance(p - dx),
        shape.distance(p + dy) - shape.distance(p - dy),
        shape.distance(p + dz) - shape.distance(p - dz),
    );
    if g.length() == 0.0 {
        return Vec3::new(0.0, 0.0, 0.0);
    }
    g.normalized()
}

/// Pinhole focal length in pixels that gives an `n`-pixel image the pose's
/// vertical field of view.
pub fn focal_length_px(cam: &CameraPose, n: usize) -> f64 {
    n as f64 / (2.0 * (cam.fov.to_radians() / 2.0).tan())
}

/// Ray-casts `shape` into a `height x width` image with the given focal
/// length (pixels) and the principal point at the image center: black RGB and
/// white depth background, headlight Lambertian shading, linear ray-distance
/// depth.
pub fn render_view<S: Sdf + ?Sized>(
    shape: &S,
    cam: &CameraPose,
    height: usize,
    width: usize,
    focal: f64,
) -> Result<Frame> {
    cam.validate(0.0)?;
    let (eye, forward, right, up) = cam.frame();
    if !shape.clears(eye) {
        return Err(Error::InvalidCamera(format!(
            "camera at distance {} is inside the object's bounding sphere",
            cam.distance
        )));
    }
    if height == 0 || width == 0 || !(focal > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "view must be non-empty with positive focal length, got {height}x{width}, f={focal}"
        )));
    }
    let radius = shape.bounding_radius();
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let rows: Vec<Vec<Option<Hit>>> = (0..height)
        .into_par_iter()
        .map(|i| {
            let v = (cy - (i as f64 + 0.5)) / focal;
            (0..width)
                .map(|j| {
                    let u = (j as f64 + 0.5 - cx) / focal;
                    let dir = (forward + right * u + up * v).normalized();
                    trace(shape, eye, dir, radius)
                })
                .collect()
        })
        .collect();
    let plane = height * width;
    let mut rgb = vec![0.0f32; 3 * plane];
    let mut depth = vec![1.0f32; plane];
    let mut mask = vec![0.0f32; plane];
    for (p, hit) in rows.iter().flatten().enumerate() {
        if let Some(h) = hit {
            for c in 0..3 {
                rgb[c * plane + p] = (h.color[c] * h.shade) as f32;
            }
            depth[p] = encode_depth(h.t, cam.distance);
            mask[p] = 1.0;
        }
    }
    Ok(Frame {
        rgb: Tensor::from_vec(&[3, height, width], rgb)?,
        depth: Tensor::from_vec(&[1, height, width], depth)?,
        mask: Tensor::from_vec(&[1, height, width], mask)?,
    })
}

/// Square `n x n` view with the pose's field of view.
pub fn render_frame<S: Sdf + ?Sized>(shape: &S, cam: &CameraPose, n: usize) -> Result<Frame> {
    render_view(shape, cam, n, n, focal_length_px(cam, n))
}

/// Tight bounding box `(y, x, height, width)` of a `[1, H, W]` mask.
pub fn mask_bbox(mask: &Tensor<f32>) -> Option<(usize, usize, usize, usize)> {
    let (h, w) = (mask.shape()[1], mask.shape()[2]);
    let (mut y0, mut x0, mut y1, mut x1) = (h, w, 0, 0);
    for (p, &v) in mask.data().iter().enumerate() {
        if v > 0.0 {
            let (y, x) = (p / w, p % w);
            y0 = y0.min(y);
            x0 = x0.min(x);
            y1 = y1.max(y);
            x1 = x1.max(x);
        }
    }
    (y0 <= y1 && x0 <= x1).then(|| (y0, x0, y1 - y0 + 1, x1 - x0 + 1))
}

/// One training/evaluation view: the object cropped to its bounding box and
/// normalized to `S x S`, as the extractor would deliver it.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSample {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
    pub mask: Tensor<f32>,
    pub pose: CameraPose,
    pub instance: ShapeInstance,
}

impl ViewSample {
    /// Generator input `[4, S, S]`: RGB followed by the mask.
    pub fn input(&self) -> Tensor<f32> {
        let mut d = self.rgb.data().to_vec();
        d.extend_from_slice(self.mask.data());
        let s = self.rgb.shape()[1];
        Tensor::from_vec(&[4, s, s], d).expect("sample planes share one size")
    }
}

/// Cuts the object out of a raw frame and normalizes RGB, mask and depth into
/// an `S x S` sample. Depth uses the same nearest-neighbour placement as the
/// mask, so the two stay consistent.
pub fn frame_to_sample(
    frame: &Frame,
    size: usize,
) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let (y, x, h, w) = mask_bbox(&frame.mask)
        .ok_or_else(|| Error::InvalidCamera("object is not visible from this pose".into()))?;
    let rgb = crop(&frame.rgb, y, x, h, w)?;
    let mask = crop(&frame.mask, y, x, h, w)?;
    let depth = crop(&frame.depth, y, x, h, w)?;
    let input = normalize_crop(&rgb, &mask, size)?;
    let depth = CropGeometry::new(h, w, size)?.place(&depth, 1.0, true)?;
    let plane = size * size;
    let data = input.into_data();
    let rgb = Tensor::from_vec(&[3, size, size], data[..3 * plane].to_vec())?;
    let mask = Tensor::from_vec(&[1, size, size], data[3 * plane..].to_vec())?;
    Ok((rgb, depth, mask))
}

/// Renders the `S x S` sample of `inst` seen from `cam`.
pub fn rasterize(inst: &ShapeInstance, cam: &CameraPose, size: usize) -> Result<ViewSample> {
    if size < MIN_SAMPLE_SIZE {
        return Err(Error::InvalidArgument(format!(
            "sample size must be at least {MIN_SAMPLE_SIZE}, got {size}"
        )));
    }
    let frame = render_frame(inst, cam, FRAME_SCALE * size)?;
    let (rgb, depth, mask) = frame_to_sample(&frame, size)?;
    Ok(ViewSample {
        rgb,
        depth,
        mask,
        pose: *cam,
        instance: inst.clone(),
    })
}
