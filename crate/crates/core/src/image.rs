//! Image helpers over `[C, H, W]` `f32` tensors with values in `[0, 1]`:
//! PNG encoding/decoding and resampling.

use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Storage depth of a PNG file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn chw(img: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] if h > 0 && w > 0 => Ok((c, h, w)),
        _ => Err(shape_err!(
            "expected a [C, H, W] image, got {:?}",
            img.shape()
        )),
    }
}

pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn quantize_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Rounds every value to the nearest level representable at `depth`, i.e. what
/// a PNG round trip would return.
pub fn quantize(img: &Tensor<f32>, depth: BitDepth) -> Tensor<f32> {
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = match depth {
            BitDepth::Eight => quantize_u8(*v) as f32 / 255.0,
            BitDepth::Sixteen => quantize_u16(*v) as f32 / 65535.0,
        };
    }
    out
}

/// Encodes a 1- or 3-channel image as grayscale or RGB PNG.
pub fn encode_png(img: &Tensor<f32>, depth: BitDepth) -> Result<Vec<u8>> {
    let (c, h, w) = chw(img)?;
    let color = match c {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => return Err(shape_err!("PNG export needs 1 or 3 channels, got {c}")),
    };
    let plane = h * w;
    let d = img.data();
    let mut raw = Vec::with_capacity(plane * c * 2);
    for p in 0..plane {
        for ch in 0..c {
            let v = d[ch * plane + p];
            match depth {
                BitDepth::Eight => raw.push(quantize_u8(v)),
                BitDepth::Sixteen => raw.extend_from_slice(&quantize_u16(v).to_be_bytes()),
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(color);
        enc.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Image(e.to_string()))?;
        writer
            .write_image_data(&raw)
            .map_err(|e| Error::Image(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes an 8- or 16-bit grayscale or RGB PNG into `[C, H, W]` in `[0, 1]`.
pub fn decode_png(bytes: &[u8]) -> Result<Tensor<f32>> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Image(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Image(e.to_string()))?;
    let c = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::Image(format!(
                "unsupported PNG color type {other:?}"
            )))
        }
    };
    let (h, w) = (info.height as usize, info.width as usize);
    let plane = h * w;
    let mut data = vec![0.0f32; c * plane];
    match info.bit_depth {
        png::BitDepth::Eight => {
            for (i, &b) in buf[..c * plane].iter().enumerate() {
                data[(i % c) * plane + i / c] = b as f32 / 255.0;
            }
        }
        png::BitDepth::Sixteen => {
            for (i, pair) in buf[..2 * c * plane].chunks_exact(2).enumerate() {
                let v = u16::from_be_bytes([pair[0], pair[1]]);
                data[(i % c) * plane + i / c] = v as f32 / 65535.0;
            }
        }
        other => return Err(Error::Image(format!("unsupported PNG bit depth {other:?}"))),
    }
    Tensor::from_vec(&[c, h, w], data)
}

pub fn save_png(img: &Tensor<f32>, depth: BitDepth, path: &Path) -> Result<()> {
    let bytes = encode_png(img, depth)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_png(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes)
}

/// Mapping of one output axis onto a source axis: output position `u`
/// (pixel `o` has center `o + 0.5`) samples source position
/// `(u - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMap {
    pub scale: f64,
    pub offset: f64,
}

impl AxisMap {
    /// Stretches `src` samples over exactly `dst` samples.
    pub fn fit(src: usize, dst: usize) -> Self {
        AxisMap {
            scale: dst as f64 / src as f64,
            offset: 0.0,
        }
    }

    fn source(&self, o: usize) -> f64 {
        (o as f64 + 0.5 - self.offset) / self.scale
    }
}

/// Per output sample: `None` outside the source, else the first source index
/// and normalized triangle-filter weights. When shrinking, the filter is
/// widened by the scale factor so every covered source pixel contributes.
fn filter_weights(src: usize, dst: usize, map: AxisMap) -> Vec<Option<(usize, Vec<f32>)>> {
    let support = (1.0 / map.scale).max(1.0);
    (0..dst)
        .map(|o| {
            let center = map.source(o);
            if !(0.0..src as f64).contains(&center) {
                return None;
            }
            let lo = (center - support).floor().max(0.0) as usize;
            let hi = ((center + support).ceil() as usize).min(src);
            let w: Vec<f64> = (lo..hi)
                .map(|i| (1.0 - ((i as f64 + 0.5 - center) / support).abs()).max(0.0))
                .collect();
            let total: f64 = w.iter().sum();
            Some((lo, w.into_iter().map(|v| (v / total) as f32).collect()))
        })
        .collect()
}

fn nearest_index(src: usize, dst: usize, map: AxisMap) -> Vec<Option<usize>> {
    (0..dst)
        .map(|o| {
            let c = map.source(o);
            (0.0..src as f64)
                .contains(&c)
                .then(|| (c as usize).min(src - 1))
        })
        .collect()
}

/// Resamples `img` onto an `out_h x out_w` grid through per-axis maps.
/// Output pixels whose centers fall outside the source get `fill`.
pub fn resample(
    img: &Tensor<f32>,
    out_h: usize,
    out_w: usize,
    map_y: AxisMap,
    map_x: AxisMap,
    fill: f32,
    nearest: bool,
) -> Result<Tensor<f32>> {
    let (c, h, w) = chw(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(shape_err!(
            "resize target must be non-empty, got {out_h}x{out_w}"
        ));
    }
    let d = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    if nearest {
        let ys = nearest_index(h, out_h, map_y);
        let xs = nearest_index(w, out_w, map_x);
        for ch in 0..c {
            for y in &ys {
                for x in &xs {
                    out.push(match (y, x) {
                        (Some(y), Some(x)) => d[ch * h * w + y * w + x],
                        _ => fill,
                    });
                }
            }
        }
        return Tensor::from_vec(&[c, out_h, out_w], out);
    }
    let fy = filter_weights(h, out_h, map_y);
    let fx = filter_weights(w, out_w, map_x);
    let mut rows = vec![0.0f32; h * out_w];
    for ch in 0..c {
        let src = &d[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for (x, f) in fx.iter().enumerate() {
                if let Some((lo, wts)) = f {
                    rows[y * out_w + x] = wts
                        .iter()
                        .enumerate()
                        .map(|(k, wt)| src[y * w + lo + k] * wt)
                        .sum();
                }
            }
        }
        for f in &fy {
            for (x, fxx) in fx.iter().enumerate() {
                out.push(match (f, fxx) {
                    (Some((lo, wts)), Some(_)) => wts
                        .iter()
                        .enumerate()
                        .map(|(k, wt)| rows[(lo + k) * out_w + x] * wt)
                        .sum(),
                    _ => fill,
                });
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Bilinear resize with half-pixel centers. Downscaling averages over the
/// whole source footprint instead of point sampling.
pub fn resize_bilinear(img: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = chw(img)?;
    resample(
        img,
        out_h,
        out_w,
        AxisMap::fit(h, out_h),
        AxisMap::fit(w, out_w),
        0.0,
        false,
    )
}

/// Nearest-neighbour resize sampling each output pixel's center.
pub fn resize_nearest(img: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = chw(img)?;
    resample(
        img,
        out_h,
        out_w,
        AxisMap::fit(h, out_h),
        AxisMap::fit(w, out_w),
        0.0,
        true,
    )
}

/// Copies the sub-rectangle `[y0, y0 + h) x [x0, x0 + w)` of every channel.
pub fn crop(img: &Tensor<f32>, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor<f32>> {
    let (c, ih, iw) = chw(img)?;
    if h == 0 || w == 0 || y0 + h > ih || x0 + w > iw {
        return Err(shape_err!(
            "crop {h}x{w} at ({y0}, {x0}) does not fit a {ih}x{iw} image"
        ));
    }
    let d = img.data();
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in y0..y0 + h {
            let row = ch * ih * iw + y * iw;
            out.extend_from_slice(&d[row + x0..row + x0 + w]);
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}
