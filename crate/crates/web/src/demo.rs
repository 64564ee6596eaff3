use viewsynth::eval::{image_accuracy, image_error};
use viewsynth::render::{make_instance_named, rasterize, CameraPose};
use viewsynth::tensor::Tensor;
use viewsynth::viewnet::{checkpoint, AngleQuery, ViewNet, ViewNetConfig};
use viewsynth::Result;

/// Interleaved 8-bit RGBA pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Rgba {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgba {
    /// Places images of equal height side by side.
    pub fn hstack(parts: &[Rgba]) -> Rgba {
        let height = parts.first().map_or(0, |p| p.height);
        let width = parts.iter().map(|p| p.width).sum();
        let mut data = Vec::with_capacity(width * height * 4);
        for y in 0..height {
            for p in parts {
                data.extend_from_slice(&p.data[y * p.width * 4..(y + 1) * p.width * 4]);
            }
        }
        Rgba {
            width,
            height,
            data,
        }
    }
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `[3, H, W]` colour or `[1, H, W]` depth to RGBA. Depth is inverted so
/// near surfaces are bright.
pub fn to_rgba(img: &Tensor<f32>) -> Rgba {
    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    let plane = h * w;
    let d = img.data();
    let mut data = Vec::with_capacity(plane * 4);
    for p in 0..plane {
        if c == 1 {
            let v = to_byte(1.0 - d[p]);
            data.extend_from_slice(&[v, v, v, 255]);
        } else {
            data.extend_from_slice(&[
                to_byte(d[p]),
                to_byte(d[plane + p]),
                to_byte(d[2 * plane + p]),
                255,
            ]);
        }
    }
    Rgba {
        width: w,
        height: h,
        data,
    }
}

pub fn render_pair(class: &str, seed: u64, pitch: f64, yaw: f64, size: usize) -> Result<Rgba> {
    let inst = make_instance_named(class, seed)?;
    let view = rasterize(&inst, &CameraPose::new(pitch, yaw), size)?;
    Ok(Rgba::hstack(&[to_rgba(&view.rgb), to_rgba(&view.depth)]))
}

pub fn untrained() -> Result<ViewNet<f32>> {
    ViewNet::build(ViewNetConfig::default(), 1)
}

pub fn load(bytes: &[u8]) -> Result<ViewNet<f32>> {
    checkpoint::from_bytes(bytes)
}

pub fn describe(net: &ViewNet<f32>) -> String {
    let c = net.config();
    format!(
        "{} px input, {} blocks, {} parameters",
        c.input_size,
        c.blocks(),
        net.param_count()
    )
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub generated_rgb: Tensor<f32>,
    pub generated_depth: Tensor<f32>,
    pub true_rgb: Tensor<f32>,
    pub true_depth: Tensor<f32>,
    pub error_rgb: f64,
    pub error_depth: f64,
    pub accuracy_rgb: f64,
    pub accuracy_depth: f64,
}

impl Comparison {
    pub fn strip(&self) -> Rgba {
        Rgba::hstack(&[
            to_rgba(&self.generated_rgb),
            to_rgba(&self.generated_depth),
            to_rgba(&self.true_rgb),
            to_rgba(&self.true_depth),
        ])
    }
}

/// Renders the input view, asks `net` for the view rotated by the deltas and
/// scores it against the true render at the target pose.
pub fn compare(
    net: &ViewNet<f32>,
    class: &str,
    seed: u64,
    pitch: f64,
    yaw: f64,
    delta_yaw: f64,
    delta_pitch: f64,
) -> Result<Comparison> {
    let size = net.config().input_size;
    let inst = make_instance_named(class, seed)?;
    let input = rasterize(&inst, &CameraPose::new(pitch, yaw), size)?;
    let target = rasterize(
        &inst,
        &CameraPose::new(pitch + delta_pitch, yaw + delta_yaw),
        size,
    )?;
    let batch = Tensor::stack(&[&input.input()])?;
    let out = net.generate(&batch, &[AngleQuery::new(delta_yaw, delta_pitch)])?;
    let generated_rgb = out.rgb.index_outer(0)?;
    let generated_depth = out.depth.index_outer(0)?;
    let error_rgb = image_error(&generated_rgb, &target.rgb)?;
    let error_depth = image_error(&generated_depth, &target.depth)?;
    Ok(Comparison {
        accuracy_rgb: image_accuracy(error_rgb)?,
        accuracy_depth: image_accuracy(error_depth)?,
        generated_rgb,
        generated_depth,
        true_rgb: target.rgb,
        true_depth: target.depth,
        error_rgb,
        error_depth,
    })
}
