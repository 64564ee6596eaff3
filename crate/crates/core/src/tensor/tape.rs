//! Wengert-list reverse-mode differentiation.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! whose inputs require gradients are appended to the node list in execution
//! order, which is therefore a topological order of the data-flow graph.
//! [`Tape::backward`] walks the list once in reverse and then clears it.

use super::ops::{self, nchw, with_chw, BatchNormState, BnSaved, ConvDims, NormMode};
use super::{Scalar, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a value stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Second operand of [`Tape::elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<T> {
    Var(Var),
    Scalar(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    /// Multiplication by a plain scalar; the tensor form is rejected.
    Scale,
}

enum Op<T: Scalar> {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Offset(usize),
    ScaleBy {
        x: usize,
        s: usize,
    },
    Sum(usize),
    Reshape(usize),
    Relu(usize),
    Sigmoid(usize),
    Conv2d {
        x: usize,
        k: usize,
        b: usize,
        dims: ConvDims,
    },
    MaxPool {
        x: usize,
        arg: Vec<u32>,
    },
    Upsample {
        x: usize,
        planes: usize,
        h: usize,
        w: usize,
    },
    Fc {
        x: usize,
        w: usize,
        b: usize,
        batch: usize,
        k: usize,
        j: usize,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        saved: BnSaved<T>,
        mode: NormMode,
        batch: usize,
        channels: usize,
        inner: usize,
    },
    Concat {
        a: usize,
        b: usize,
        batch: usize,
        a_len: usize,
        b_len: usize,
    },
    Mse {
        p: usize,
        t: usize,
    },
}

struct Node<T: Scalar> {
    out: usize,
    op: Op<T>,
}

pub struct Tape<T: Scalar> {
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Tensor<T>>>,
    needs_grad: Vec<bool>,
    is_leaf: Vec<bool>,
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            grads: Vec::new(),
            needs_grad: Vec::new(),
            is_leaf: Vec::new(),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    /// Registers a constant input (no gradient).
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, false)
    }

    /// Registers a trainable leaf whose gradient is populated by `backward`.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, true)
    }

    fn push_leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.values.push(t);
        self.grads.push(None);
        self.needs_grad.push(requires_grad);
        self.is_leaf.push(true);
        Var(self.values.len() - 1)
    }

    fn push_op(&mut self, t: Tensor<T>, inputs: &[usize], op: impl FnOnce() -> Op<T>) -> Var {
        let needs = inputs.iter().any(|&i| self.needs_grad[i]);
        self.values.push(t);
        self.grads.push(None);
        self.needs_grad.push(needs);
        self.is_leaf.push(false);
        let out = self.values.len() - 1;
        if needs {
            self.nodes.push(Node { out, op: op() });
        }
        Var(out)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    /// Gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].take()
    }

    /// Number of recorded (differentiable) operations awaiting `backward`.
    pub fn recorded_ops(&self) -> usize {
        self.nodes.len()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.values[a.0].shape(), self.values[b.0].shape());
        if sa != sb {
            return Err(shape_err!("{what}: shapes {sa:?} and {sb:?} differ"));
        }
        Ok(())
    }

    fn map(&self, v: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let x = &self.values[v.0];
        Tensor::from_vec(x.shape(), x.data().iter().map(|&e| f(e)).collect())
            .expect("shape preserved")
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (x, y) = (&self.values[a.0], &self.values[b.0]);
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        Tensor::from_vec(x.shape(), data).expect("shape preserved")
    }

    // -- elementwise ------------------------------------------------------

    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Operand<T>) -> Result<Var> {
        match (op, b) {
            (ElementwiseOp::Add, Operand::Var(b)) => self.add(a, b),
            (ElementwiseOp::Sub, Operand::Var(b)) => self.sub(a, b),
            (ElementwiseOp::Mul, Operand::Var(b)) => self.mul(a, b),
            (ElementwiseOp::Add, Operand::Scalar(c)) => Ok(self.add_scalar(a, c)),
            (ElementwiseOp::Sub, Operand::Scalar(c)) => Ok(self.add_scalar(a, -c)),
            (ElementwiseOp::Mul | ElementwiseOp::Scale, Operand::Scalar(c)) => Ok(self.scale(a, c)),
            (ElementwiseOp::Scale, Operand::Var(_)) => Err(Error::InvalidArgument(
                "scale takes a plain scalar factor".into(),
            )),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let t = self.zip(a, b, |p, q| p + q);
        Ok(self.push_op(t, &[a.0, b.0], || Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let t = self.zip(a, b, |p, q| p - q);
        Ok(self.push_op(t, &[a.0, b.0], || Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let t = self.zip(a, b, |p, q| p * q);
        Ok(self.push_op(t, &[a.0, b.0], || Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let t = self.map(a, |v| v * c);
        self.push_op(t, &[a.0], || Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let t = self.map(a, |v| v + c);
        self.push_op(t, &[a.0], || Op::Offset(a.0))
    }

    /// `x * s` where `s` is a differentiable one-element tensor.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.values[s.0].len() != 1 {
            return Err(shape_err!(
                "scale_by factor must have one element, got {:?}",
                self.values[s.0].shape()
            ));
        }
        let c = self.values[s.0].data()[0];
        let t = self.map(x, |v| v * c);
        Ok(self.push_op(t, &[x.0, s.0], || Op::ScaleBy { x: x.0, s: s.0 }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.values[x.0].data().iter().copied().sum();
        self.push_op(Tensor::scalar(s), &[x.0], || Op::Sum(x.0))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.values[x.0].clone().reshape(shape)?;
        Ok(self.push_op(t, &[x.0], || Op::Reshape(x.0)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| if v > T::zero() { v } else { T::zero() });
        self.push_op(t, &[x.0], || Op::Relu(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map(x, ops::sigmoid);
        self.push_op(t, &[x.0], || Op::Sigmoid(x.0))
    }

    // -- layers -------------------------------------------------------------

    /// 3x3 cross-correlation, stride 1, zero padding 1.
    /// `x`: `[C_in,H,W]` or `[B,C_in,H,W]`; `kernel`: `[C_out,C_in,3,3]`; `bias`: `[C_out]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let xs = self.values[x.0].shape().to_vec();
        let (batch, c_in, h, w) = nchw(&xs)?;
        let ks = self.values[kernel.0].shape();
        let [c_out, kc, 3, 3] = *ks else {
            return Err(shape_err!(
                "conv2d kernel must be [C_out,C_in,3,3], got {ks:?}"
            ));
        };
        if kc != c_in {
            return Err(shape_err!(
                "conv2d channel mismatch: input has {c_in}, kernel expects {kc}"
            ));
        }
        if self.values[bias.0].shape() != [c_out] {
            return Err(shape_err!(
                "conv2d bias must be [{c_out}], got {:?}",
                self.values[bias.0].shape()
            ));
        }
        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            h,
            w,
        };
        let out = ops::conv2d_forward(
            self.values[x.0].data(),
            self.values[kernel.0].data(),
            self.values[bias.0].data(),
            &dims,
        );
        let t = Tensor::from_vec(&with_chw(&xs, c_out, h, w), out)?;
        Ok(self.push_op(t, &[x.0, kernel.0, bias.0], || Op::Conv2d {
            x: x.0,
            k: kernel.0,
            b: bias.0,
            dims,
        }))
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let xs = self.values[x.0].shape().to_vec();
        let (batch, c, h, w) = nchw(&xs)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err!("maxpool2x2 needs even H and W, got {h}x{w}"));
        }
        let (out, arg) = ops::maxpool_forward(self.values[x.0].data(), batch * c, h, w);
        let t = Tensor::from_vec(&with_chw(&xs, c, h / 2, w / 2), out)?;
        Ok(self.push_op(t, &[x.0], || Op::MaxPool { x: x.0, arg }))
    }

    pub fn bilinear_upsample2x(&mut self, x: Var) -> Result<Var> {
        let xs = self.values[x.0].shape().to_vec();
        let (batch, c, h, w) = nchw(&xs)?;
        let out = ops::upsample_forward(self.values[x.0].data(), batch * c, h, w);
        let t = Tensor::from_vec(&with_chw(&xs, c, 2 * h, 2 * w), out)?;
        Ok(self.push_op(t, &[x.0], || Op::Upsample {
            x: x.0,
            planes: batch * c,
            h,
            w,
        }))
    }

    /// `weight . x + bias`. `x`: `[K]` or `[B,K]`; `weight`: `[J,K]`; `bias`: `[J]`.
    pub fn fully_connected(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.values[x.0].shape().to_vec();
        let (batch, k) = match *xs.as_slice() {
            [k] => (1, k),
            [b, k] => (b, k),
            _ => {
                return Err(shape_err!(
                    "fully_connected input must be [K] or [B,K], got {xs:?}"
                ))
            }
        };
        let ws = self.values[weight.0].shape();
        let [j, wk] = *ws else {
            return Err(shape_err!(
                "fully_connected weight must be [J,K], got {ws:?}"
            ));
        };
        if wk != k {
            return Err(shape_err!(
                "fully_connected dimension mismatch: input {k}, weight expects {wk}"
            ));
        }
        if self.values[bias.0].shape() != [j] {
            return Err(shape_err!(
                "fully_connected bias must be [{j}], got {:?}",
                self.values[bias.0].shape()
            ));
        }
        let mut out = Vec::with_capacity(batch * j);
        for _ in 0..batch {
            out.extend_from_slice(self.values[bias.0].data());
        }
        T::gemm(
            batch,
            k,
            j,
            self.values[x.0].data(),
            false,
            self.values[weight.0].data(),
            true,
            &mut out,
            T::one(),
        );
        let shape = if xs.len() == 1 {
            vec![j]
        } else {
            vec![batch, j]
        };
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push_op(t, &[x.0, weight.0, bias.0], || Op::Fc {
            x: x.0,
            w: weight.0,
            b: bias.0,
            batch,
            k,
            j,
        }))
    }

    /// Batch normalization over `[B, C, ...]` with per-channel `gamma`/`beta`.
    /// Train mode uses batch statistics and updates `state`; eval mode reads it.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        mode: NormMode,
    ) -> Result<Var> {
        let xs = self.values[x.0].shape().to_vec();
        if xs.len() < 2 {
            return Err(shape_err!("batchnorm input must be [B,C,...], got {xs:?}"));
        }
        let (batch, channels) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        if mode == NormMode::Train && batch < 2 {
            return Err(Error::InvalidBatch(format!(
                "train-mode batch norm needs batch size >= 2, got {batch}"
            )));
        }
        for (v, name) in [(gamma, "gamma"), (beta, "beta")] {
            if self.values[v.0].shape() != [channels] {
                return Err(shape_err!(
                    "batchnorm {name} must be [{channels}], got {:?}",
                    self.values[v.0].shape()
                ));
            }
        }
        if state.channels() != channels {
            return Err(shape_err!(
                "batchnorm state has {} channels, input has {channels}",
                state.channels()
            ));
        }
        let (y, saved) = ops::batchnorm_forward(
            self.values[x.0].data(),
            self.values[gamma.0].data(),
            self.values[beta.0].data(),
            state,
            mode,
            batch,
            channels,
            inner,
        );
        let t = Tensor::from_vec(&xs, y)?;
        Ok(self.push_op(t, &[x.0, gamma.0, beta.0], || Op::BatchNorm {
            x: x.0,
            gamma: gamma.0,
            beta: beta.0,
            saved,
            mode,
            batch,
            channels,
            inner,
        }))
    }

    /// Channels of `a` followed by channels of `b`; spatial sizes must agree.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.values[a.0].shape().to_vec();
        let sb = self.values[b.0].shape().to_vec();
        let (ba, c1, h, w) = nchw(&sa)?;
        let (bb, c2, h2, w2) = nchw(&sb)?;
        if sa.len() != sb.len() || ba != bb || h != h2 || w != w2 {
            return Err(shape_err!(
                "concat_channels: incompatible shapes {sa:?} and {sb:?}"
            ));
        }
        let (a_len, b_len) = (c1 * h * w, c2 * h * w);
        let mut out = Vec::with_capacity(ba * (a_len + b_len));
        for i in 0..ba {
            out.extend_from_slice(&self.values[a.0].data()[i * a_len..(i + 1) * a_len]);
            out.extend_from_slice(&self.values[b.0].data()[i * b_len..(i + 1) * b_len]);
        }
        let t = Tensor::from_vec(&with_chw(&sa, c1 + c2, h, w), out)?;
        Ok(self.push_op(t, &[a.0, b.0], || Op::Concat {
            a: a.0,
            b: b.0,
            batch: ba,
            a_len,
            b_len,
        }))
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse_loss")?;
        let (p, t) = (&self.values[pred.0], &self.values[target.0]);
        let n = T::from_f64(p.len() as f64);
        let s: T = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok(
            self.push_op(Tensor::scalar(s / n), &[pred.0, target.0], || Op::Mse {
                p: pred.0,
                t: target.0,
            }),
        )
    }

    // -- reverse pass -------------------------------------------------------

    /// Accumulates `d loss / d leaf` into every gradient-requiring leaf and
    /// clears the recorded operations. A second call without a new forward
    /// pass is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::InvalidArgument(
                "tape already consumed by a previous backward pass".into(),
            ));
        }
        if self.values[loss.0].len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.values[loss.0].shape()
            )));
        }
        if !self.needs_grad[loss.0] {
            return Err(Error::InvalidArgument(
                "loss does not depend on any gradient-requiring tensor".into(),
            ));
        }
        self.consumed = true;
        self.grads[loss.0] = Some(Tensor::scalar(T::one()));
        let nodes = std::mem::take(&mut self.nodes);
        for node in nodes.into_iter().rev() {
            let Some(g) = self.grads[node.out].take() else {
                continue;
            };
            self.backward_node(node.op, g);
        }
        for i in 0..self.values.len() {
            if self.is_leaf[i] && self.needs_grad[i] && self.grads[i].is_none() {
                self.grads[i] = Some(Tensor::from_vec(
                    self.values[i].shape(),
                    vec![T::zero(); self.values[i].len()],
                )?);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, idx: usize, contribution: Vec<T>) {
        if !self.needs_grad[idx] {
            return;
        }
        match &mut self.grads[idx] {
            Some(g) => ops::add_into(g.data_mut(), &contribution),
            slot @ None => {
                *slot = Some(
                    Tensor::from_vec(self.values[idx].shape(), contribution)
                        .expect("gradient matches value shape"),
                );
            }
        }
    }

    fn backward_node(&mut self, op: Op<T>, g: Tensor<T>) {
        let gd = g.data();
        match op {
            Op::Add(a, b) => {
                self.accumulate(a, gd.to_vec());
                self.accumulate(b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, gd.to_vec());
                self.accumulate(b, gd.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let da = gd
                    .iter()
                    .zip(self.values[b].data())
                    .map(|(&g, &y)| g * y)
                    .collect();
                let db = gd
                    .iter()
                    .zip(self.values[a].data())
                    .map(|(&g, &x)| g * x)
                    .collect();
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Scale(a, c) => self.accumulate(a, gd.iter().map(|&v| v * c).collect()),
            Op::Offset(a) | Op::Reshape(a) => self.accumulate(a, gd.to_vec()),
            Op::ScaleBy { x, s } => {
                let c = self.values[s].data()[0];
                let ds: T = gd
                    .iter()
                    .zip(self.values[x].data())
                    .map(|(&g, &v)| g * v)
                    .sum();
                self.accumulate(x, gd.iter().map(|&v| v * c).collect());
                self.accumulate(s, vec![ds]);
            }
            Op::Sum(a) => {
                let n = self.values[a].len();
                self.accumulate(a, vec![gd[0]; n]);
            }
            Op::Relu(a) => {
                let dx = gd
                    .iter()
                    .zip(self.values[a].data())
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                self.accumulate(a, dx);
            }
            Op::Sigmoid(a) => {
                let dx = gd
                    .iter()
                    .zip(self.values[a].data())
                    .map(|(&g, &x)| {
                        let y = ops::sigmoid(x);
                        g * y * (T::one() - y)
                    })
                    .collect();
                self.accumulate(a, dx);
            }
            Op::Conv2d { x, k, b, dims } => {
                let need_dx = self.needs_grad[x];
                let (dx, dk, db) = ops::conv2d_backward(
                    self.values[x].data(),
                    self.values[k].data(),
                    gd,
                    &dims,
                    need_dx,
                );
                if let Some(dx) = dx {
                    self.accumulate(x, dx);
                }
                self.accumulate(k, dk);
                self.accumulate(b, db);
            }
            Op::MaxPool { x, arg } => {
                let mut dx = vec![T::zero(); self.values[x].len()];
                for (&i, &g) in arg.iter().zip(gd) {
                    dx[i as usize] = dx[i as usize] + g;
                }
                self.accumulate(x, dx);
            }
            Op::Upsample { x, planes, h, w } => {
                self.accumulate(x, ops::upsample_backward(gd, planes, h, w));
            }
            Op::Fc {
                x,
                w,
                b,
                batch,
                k,
                j,
            } => {
                if self.needs_grad[x] {
                    let mut dx = vec![T::zero(); batch * k];
                    T::gemm(
                        batch,
                        j,
                        k,
                        gd,
                        false,
                        self.values[w].data(),
                        false,
                        &mut dx,
                        T::zero(),
                    );
                    self.accumulate(x, dx);
                }
                let mut dw = vec![T::zero(); j * k];
                T::gemm(
                    j,
                    batch,
                    k,
                    gd,
                    true,
                    self.values[x].data(),
                    false,
                    &mut dw,
                    T::zero(),
                );
                self.accumulate(w, dw);
                let mut db = vec![T::zero(); j];
                for row in gd.chunks(j) {
                    ops::add_into(&mut db, row);
                }
                self.accumulate(b, db);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
                mode,
                batch,
                channels,
                inner,
            } => {
                let (dx, dgamma, dbeta) = ops::batchnorm_backward(
                    gd,
                    self.values[gamma].data(),
                    &saved,
                    mode,
                    batch,
                    channels,
                    inner,
                );
                self.accumulate(x, dx);
                self.accumulate(gamma, dgamma);
                self.accumulate(beta, dbeta);
            }
            Op::Concat {
                a,
                b,
                batch,
                a_len,
                b_len,
            } => {
                let mut da = Vec::with_capacity(batch * a_len);
                let mut db = Vec::with_capacity(batch * b_len);
                for chunk in gd.chunks(a_len + b_len) {
                    da.extend_from_slice(&chunk[..a_len]);
                    db.extend_from_slice(&chunk[a_len..]);
                }
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Mse { p, t } => {
                let n = T::from_f64(self.values[p].len() as f64);
                let scale = gd[0] * T::from_f64(2.0) / n;
                let dp: Vec<T> = self.values[p]
                    .data()
                    .iter()
                    .zip(self.values[t].data())
                    .map(|(&a, &b)| (a - b) * scale)
                    .collect();
                let dt = dp.iter().map(|&v| -v).collect();
                self.accumulate(p, dp);
                self.accumulate(t, dt);
            }
        }
    }
}
