use crate::error::{shape_err, Error, Result};
use crate::image::{resample, AxisMap};
use crate::tensor::Tensor;

/// Placement of an `h x w` crop inside an `S x S` canvas: the longer side is
/// scaled to `S`, the shorter by the same factor, and the content centered.
///
/// Sampling uses the exact (fractional) scale and offsets; the integer fields
/// describe the resulting content region rounded to whole pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropGeometry {
    pub size: usize,
    pub source_height: usize,
    pub source_width: usize,
    /// Output pixels per source pixel.
    pub scale: f64,
    pub content_height: usize,
    pub content_width: usize,
    pub top: usize,
    pub left: usize,
}

impl CropGeometry {
    pub fn new(height: usize, width: usize, size: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidCrop(format!(
                "crop of {height}x{width} has zero area"
            )));
        }
        if size == 0 {
            return Err(Error::InvalidArgument(
                "target size must be positive".into(),
            ));
        }
        let scale = size as f64 / height.max(width) as f64;
        let fit = |n: usize| ((n as f64 * scale).round() as usize).clamp(1, size);
        let (ch, cw) = (fit(height), fit(width));
        Ok(CropGeometry {
            size,
            source_height: height,
            source_width: width,
            scale,
            content_height: ch,
            content_width: cw,
            top: (size - ch) / 2,
            left: (size - cw) / 2,
        })
    }

    fn axis(&self, n: usize) -> AxisMap {
        AxisMap {
            scale: self.scale,
            offset: (self.size as f64 - n as f64 * self.scale) / 2.0,
        }
    }

    /// Resamples `img` (which must be `source_height x source_width`) into the
    /// content region and fills the rest with `fill`.
    pub fn place(&self, img: &Tensor<f32>, fill: f32, nearest: bool) -> Result<Tensor<f32>> {
        match *img.shape() {
            [_, h, w] if (h, w) == (self.source_height, self.source_width) => {}
            ref s => {
                return Err(shape_err!(
                    "crop geometry is for {}x{} images, got {s:?}",
                    self.source_height,
                    self.source_width
                ))
            }
        }
        resample(
            img,
            self.size,
            self.size,
            self.axis(self.source_height),
            self.axis(self.source_width),
            fill,
            nearest,
        )
    }
}

/// Turns an object crop into the generator's `[4, S, S]` input: RGB resampled
/// bilinearly, mask by nearest neighbour, both centered on black. RGB is
/// zeroed wherever the (input or output) mask is 0.
pub fn normalize_crop(rgb: &Tensor<f32>, mask: &Tensor<f32>, size: usize) -> Result<Tensor<f32>> {
    let (h, w) = match (rgb.shape(), mask.shape()) {
        (&[3, h, w], &[1, mh, mw]) if (h, w) == (mh, mw) => (h, w),
        (&[3, h, w], &[1, _, _]) if h == 0 || w == 0 => (h, w),
        (r, m) => {
            return Err(shape_err!(
                "normalize_crop needs rgb [3, H, W] and mask [1, H, W], got {r:?} and {m:?}"
            ))
        }
    };
    let geom = CropGeometry::new(h, w, size)?;
    let mut masked = rgb.clone();
    let plane = h * w;
    let m = mask.data();
    for (i, v) in masked.data_mut().iter_mut().enumerate() {
        if m[i % plane] == 0.0 {
            *v = 0.0;
        }
    }
    let rgb_out = geom.place(&masked, 0.0, false)?;
    let mask_out = geom.place(mask, 0.0, true)?;
    let sp = size * size;
    let mut data = rgb_out.into_data();
    let mo = mask_out.into_data();
    for (i, v) in data.iter_mut().enumerate() {
        if mo[i % sp] == 0.0 {
            *v = 0.0;
        }
    }
    data.extend(mo.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }));
    Tensor::from_vec(&[4, size, size], data)
}
