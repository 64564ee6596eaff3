//! Forward and backward kernels. Everything here works on flat row-major
//! slices; [`super::Tape`] owns shape checking and recording.

use rayon::prelude::*;

use super::Scalar;
use crate::error::{shape_err, Result};

/// Batch-norm epsilon added to the variance.
pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept by the running statistics on each training update:
/// `running = momentum * running + (1 - momentum) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Running per-channel statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T: Scalar> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Interprets `[C,H,W]` as a batch of one, `[B,C,H,W]` as is.
pub(crate) fn nchw(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w)),
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(shape_err!("expected [C,H,W] or [B,C,H,W], got {shape:?}")),
    }
}

/// Replaces the trailing `[C,H,W]` of `like` with new sizes, keeping rank.
pub(crate) fn with_chw(like: &[usize], c: usize, h: usize, w: usize) -> Vec<usize> {
    if like.len() == 4 {
        vec![like[0], c, h, w]
    } else {
        vec![c, h, w]
    }
}

// ---------------------------------------------------------------------------
// 3x3 stride-1 convolution, zero padding 1, via im2col + GEMM.

fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d = *d + *s;
                            }
                        }
                        1 => {
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = *d + *s;
                            }
                        }
                        _ => {
                            for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d = *d + *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], kernel: &[T], bias: &[T], d: &ConvDims) -> Vec<T> {
    let hw = d.h * d.w;
    let k = d.c_in * 9;
    let mut out = vec![T::zero(); d.batch * d.c_out * hw];
    out.par_chunks_mut(d.c_out * hw)
        .zip(x.par_chunks(d.c_in * hw))
        .for_each_init(
            || vec![T::zero(); k * hw],
            |col, (o, xs)| {
                im2col(xs, d.c_in, d.h, d.w, col);
                for (co, plane) in o.chunks_mut(hw).enumerate() {
                    plane.fill(bias[co]);
                }
                T::gemm(d.c_out, k, hw, kernel, false, col, false, o, T::one());
            },
        );
    out
}

/// Returns `(dx, dkernel, dbias)`; `dx` is skipped when `need_dx` is false.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    kernel: &[T],
    dy: &[T],
    d: &ConvDims,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let hw = d.h * d.w;
    let k = d.c_in * 9;
    let per_sample: Vec<(Option<Vec<T>>, Vec<T>, Vec<T>)> = x
        .par_chunks(d.c_in * hw)
        .zip(dy.par_chunks(d.c_out * hw))
        .map_init(
            || vec![T::zero(); k * hw],
            |col, (xs, dys)| {
                im2col(xs, d.c_in, d.h, d.w, col);
                let mut dk = vec![T::zero(); d.c_out * k];
                T::gemm(d.c_out, hw, k, dys, false, col, true, &mut dk, T::zero());
                let db: Vec<T> = dys.chunks(hw).map(|p| p.iter().copied().sum()).collect();
                let dx = need_dx.then(|| {
                    T::gemm(k, d.c_out, hw, kernel, true, dys, false, col, T::zero());
                    let mut dx = vec![T::zero(); d.c_in * hw];
                    col2im(col, d.c_in, d.h, d.w, &mut dx);
                    dx
                });
                (dx, dk, db)
            },
        )
        .collect();

    // Fixed-order reduction keeps results independent of the thread count.
    let mut dk = vec![T::zero(); d.c_out * k];
    let mut db = vec![T::zero(); d.c_out];
    let mut dx = need_dx.then(|| Vec::with_capacity(x.len()));
    for (sdx, sdk, sdb) in per_sample {
        add_into(&mut dk, &sdk);
        add_into(&mut db, &sdb);
        if let (Some(acc), Some(s)) = (dx.as_mut(), sdx) {
            acc.extend_from_slice(&s);
        }
    }
    (dx, dk, db)
}

pub(crate) fn add_into<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a = *a + *b;
    }
}

// ---------------------------------------------------------------------------
// 2x2 max pooling.

/// Returns the pooled values and, per output, the flat index of the input
/// element that won (first maximum in row-major window order).
pub(crate) fn maxpool_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

// ---------------------------------------------------------------------------
// Bilinear 2x upsampling, align-corners = false.

/// Per output coordinate: `(i0, i1, w0, w1)` with `out = w0*in[i0] + w1*in[i1]`.
pub(crate) fn upsample_taps(n: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let lam = src - i0 as f64;
            (i0, i1, 1.0 - lam, lam)
        })
        .collect()
}

pub(crate) fn upsample_forward<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64(wy0), T::from_f64(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::from_f64(wx0), T::from_f64(wx1));
                let top = wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1];
                let bot = wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1];
                dst[oy * ow + ox] = wy0 * top + wy1 * bot;
            }
        }
    }
    out
}

pub(crate) fn upsample_backward<T: Scalar>(dy: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let g = &dy[p * oh * ow..(p + 1) * oh * ow];
        let d = &mut dx[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64(wy0), T::from_f64(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::from_f64(wx0), T::from_f64(wx1));
                let v = g[oy * ow + ox];
                d[y0 * w + x0] = d[y0 * w + x0] + wy0 * wx0 * v;
                d[y0 * w + x1] = d[y0 * w + x1] + wy0 * wx1 * v;
                d[y1 * w + x0] = d[y1 * w + x0] + wy1 * wx0 * v;
                d[y1 * w + x1] = d[y1 * w + x1] + wy1 * wx1 * v;
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Batch normalization over `[B, C, inner...]`.

pub(crate) struct BnSaved<T> {
    /// Normalized input (before gamma/beta).
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn batchnorm_forward<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    state: &mut BatchNormState<T>,
    mode: NormMode,
    batch: usize,
    channels: usize,
    inner: usize,
) -> (Vec<T>, BnSaved<T>) {
    let eps = T::from_f64(BN_EPSILON);
    let n = batch * inner;
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    match mode {
        NormMode::Train => {
            let nf = T::from_f64(n as f64);
            for c in 0..channels {
                let mut s = T::zero();
                for b in 0..batch {
                    s = s + x[(b * channels + c) * inner..][..inner]
                        .iter()
                        .copied()
                        .sum();
                }
                let m = s / nf;
                let mut v = T::zero();
                for b in 0..batch {
                    for &xv in &x[(b * channels + c) * inner..][..inner] {
                        v = v + (xv - m) * (xv - m);
                    }
                }
                mean[c] = m;
                var[c] = v / nf;
            }
            let mom = T::from_f64(BN_MOMENTUM);
            let unbias = T::from_f64(n as f64 / (n as f64 - 1.0));
            for c in 0..channels {
                state.running_mean[c] = mom * state.running_mean[c] + (T::one() - mom) * mean[c];
                state.running_var[c] =
                    mom * state.running_var[c] + (T::one() - mom) * var[c] * unbias;
            }
        }
        NormMode::Eval => {
            mean.copy_from_slice(&state.running_mean);
            var.copy_from_slice(&state.running_var);
        }
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * inner;
            for i in off..off + inner {
                let xh = (x[i] - mean[c]) * inv_std[c];
                xhat[i] = xh;
                y[i] = gamma[c] * xh + beta[c];
            }
        }
    }
    (y, BnSaved { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_backward<T: Scalar>(
    dy: &[T],
    gamma: &[T],
    saved: &BnSaved<T>,
    mode: NormMode,
    batch: usize,
    channels: usize,
    inner: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::from_f64((batch * inner) as f64);
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * inner;
            for i in off..off + inner {
                dgamma[c] = dgamma[c] + dy[i] * saved.xhat[i];
                dbeta[c] = dbeta[c] + dy[i];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * inner;
            let g = gamma[c] * saved.inv_std[c];
            for i in off..off + inner {
                dx[i] = match mode {
                    // dx = g/N * (N*dy - sum(dy) - xhat*sum(dy*xhat))
                    NormMode::Train => g / n * (n * dy[i] - dbeta[c] - saved.xhat[i] * dgamma[c]),
                    NormMode::Eval => g * dy[i],
                };
            }
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// Numerically safe logistic function.

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
