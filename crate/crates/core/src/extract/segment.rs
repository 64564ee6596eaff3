use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Label given to detections when the scene carries no class metadata.
pub const UNKNOWN_LABEL: &str = "unknown";

/// Pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl BBox {
    pub fn intersects(&self, o: &BBox) -> bool {
        self.x < o.x + o.width
            && o.x < self.x + self.width
            && self.y < o.y + o.height
            && o.y < self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    /// `[1, bbox.height, bbox.width]`, values in {0, 1}.
    pub mask: Tensor<f32>,
    pub class_label: String,
    pub score: f32,
}

impl Detection {
    pub fn area(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v > 0.0).count()
    }
}

/// Binary foreground mask: a pixel is foreground when any channel differs from
/// `background` by more than `tolerance`.
pub fn foreground_mask(
    scene: &Tensor<f32>,
    background: [f32; 3],
    tolerance: f32,
) -> Result<Tensor<f32>> {
    let [3, h, w] = *scene.shape() else {
        return Err(shape_err!(
            "scene must be [3, H, W], got {:?}",
            scene.shape()
        ));
    };
    let plane = h * w;
    let d = scene.data();
    let data = (0..plane)
        .map(|p| {
            let fg = (0..3).any(|c| (d[c * plane + p] - background[c]).abs() > tolerance);
            fg as u8 as f32
        })
        .collect();
    Tensor::from_vec(&[1, h, w], data)
}

/// Connected components (8-connectivity) of non-background pixels, in the
/// raster order of each component's first pixel. Every detection gets
/// `label` (or [`UNKNOWN_LABEL`]) and score 1.
pub fn segment_background_threshold(
    scene: &Tensor<f32>,
    background: [f32; 3],
    tolerance: f32,
    label: Option<&str>,
) -> Result<Vec<Detection>> {
    let fg = foreground_mask(scene, background, tolerance)?;
    let (h, w) = (fg.shape()[1], fg.shape()[2]);
    let fg = fg.data();
    let mut component = vec![usize::MAX; h * w];
    let mut detections = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if fg[start] == 0.0 || component[start] != usize::MAX {
            continue;
        }
        let id = detections.len();
        component[start] = id;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            pixels.push(p);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if fg[q] != 0.0 && component[q] == usize::MAX {
                        component[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        let bbox = BBox {
            x: x0,
            y: y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        };
        let mut mask = vec![0.0f32; bbox.width * bbox.height];
        for p in pixels {
            mask[(p / w - y0) * bbox.width + (p % w - x0)] = 1.0;
        }
        detections.push(Detection {
            bbox,
            mask: Tensor::from_vec(&[1, bbox.height, bbox.width], mask)?,
            class_label: label.unwrap_or(UNKNOWN_LABEL).to_string(),
            score: 1.0,
        });
    }
    Ok(detections)
}
