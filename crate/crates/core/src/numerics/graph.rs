//! Tape-based reverse-mode differentiation over a fixed operator set.
//!
//! A [`Graph`] records every operation eagerly (values are computed as nodes
//! are appended) and [`Graph::backward`] walks the tape in reverse. Leaves
//! created with [`Graph::param`] receive gradients; leaves created with
//! [`Graph::input`] are constants.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{col2im_add, im2col, ConvGeometry};
use super::real::{gemm, Real};
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Shift(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Square(Var),
    Abs(Var),
    Clamp(Var, T, T),
    Softmax(Var),
    LogSoftmax(Var),
    SumAll(Var),
    MeanAll(Var),
    SumLast(Var),
    Reshape(Var),
    Dense { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    ConvTranspose2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked")
}

fn softmax_rows<T: Real>(x: &Tensor<T>, log: bool) -> Tensor<T> {
    let last = *x.shape().last().expect("rank >= 1");
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(last) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = *v - max;
            total += v.exp();
        }
        let log_total = total.ln();
        for v in row.iter_mut() {
            *v = if log { *v - log_total } else { (*v - log_total).exp() };
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.unary(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Var {
        self.unary(x, Op::Shift(x), |v| v + s)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |v| if v > T::zero() { v } else { v * slope })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), |v| v.tanh())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), |v| T::one() / (T::one() + (-v).exp()))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), |v| v.ln())
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), |v| v.abs())
    }

    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.max(lo).min(hi))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x), false);
        let rg = self.rg(x);
        self.push(value, Op::Softmax(x), rg)
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x), true);
        let rg = self.rg(x);
        self.push(value, Op::LogSoftmax(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::SumAll(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / T::of(t.numel() as f64));
        let rg = self.rg(x);
        self.push(value, Op::MeanAll(x), rg)
    }

    /// Sums over the last axis, dropping it (a rank-1 input yields shape `[1]`).
    pub fn sum_last(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let last = *t.shape().last().expect("rank >= 1");
        let data: Vec<T> = t.data().chunks(last).map(|r| r.iter().copied().sum()).collect();
        let mut shape = t.shape()[..t.shape().len() - 1].to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        let value = Tensor::new(shape, data).expect("consistent");
        let rg = self.rg(x);
        self.push(value, Op::SumLast(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// `x·wᵀ + b` with `x: [batch, ...]` flattened per row, `w: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        if wt.shape().len() != 2 || bt.shape() != [wt.shape()[0]] || xt.row_len() != wt.shape()[1] {
            return Err(shape_err(format!(
                "dense: input {:?}, weight {:?}, bias {:?}",
                xt.shape(),
                wt.shape(),
                bt.shape()
            )));
        }
        let (rows, inp, out) = (xt.rows(), wt.shape()[1], wt.shape()[0]);
        let mut y = vec![T::zero(); rows * out];
        gemm(rows, inp, out, xt.data(), false, wt.data(), true, &mut y, false);
        for r in y.chunks_mut(out) {
            for (v, &bias) in r.iter_mut().zip(bt.data()) {
                *v += bias;
            }
        }
        let value = Tensor::new([rows, out], y)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, Op::Dense { x, w, b }, rg))
    }

    /// Cross-correlation `x: [n, c, h, w]`, `w: [o, c, k, k]`, `b: [o]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (xs, ws) = (xt.shape(), wt.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || bt.shape() != [ws[0]] {
            return Err(shape_err(format!("conv2d: input {xs:?}, weight {ws:?}, bias {:?}", bt.shape())));
        }
        let (n, c, h, wd, o, k) = (xs[0], xs[1], xs[2], xs[3], ws[0], ws[2]);
        let (oh, ow) = match (
            ConvGeometry::out_extent(h, k, stride, pad),
            ConvGeometry::out_extent(wd, k, stride, pad),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(shape_err(format!("conv2d: kernel {k} does not fit input {xs:?}"))),
        };
        let g = ConvGeometry { channels: c, height: h, width: wd, kernel: k, stride, pad };
        let (plen, pos) = (g.patch_len(), oh * ow);
        let mut cols = vec![T::zero(); plen * pos];
        let mut y = vec![T::zero(); n * o * pos];
        for i in 0..n {
            im2col(&xt.data()[i * c * h * wd..(i + 1) * c * h * wd], &g, &mut cols);
            let yi = &mut y[i * o * pos..(i + 1) * o * pos];
            gemm(o, plen, pos, wt.data(), false, &cols, false, yi, false);
            for (ch, &bias) in yi.chunks_mut(pos).zip(bt.data()) {
                ch.iter_mut().for_each(|v| *v += bias);
            }
        }
        let value = Tensor::new([n, o, oh, ow], y)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, stride, pad }, rg))
    }

    /// Transposed convolution `x: [n, c, h, w]`, `w: [c, o, k, k]`, `b: [o]`;
    /// output extent `(h-1)·stride − 2·pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (xs, ws) = (xt.shape(), wt.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[0] != xs[1] || ws[2] != ws[3] || bt.shape() != [ws[1]] {
            return Err(shape_err(format!(
                "conv_transpose2d: input {xs:?}, weight {ws:?}, bias {:?}",
                bt.shape()
            )));
        }
        let (n, c, h, wd, o, k) = (xs[0], xs[1], xs[2], xs[3], ws[1], ws[2]);
        let oh = ((h - 1) * stride + k).checked_sub(2 * pad);
        let ow = ((wd - 1) * stride + k).checked_sub(2 * pad);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) if a > 0 && b > 0 && stride > 0 => (a, b),
            _ => return Err(shape_err(format!("conv_transpose2d: empty output for {xs:?}"))),
        };
        let g = ConvGeometry { channels: o, height: oh, width: ow, kernel: k, stride, pad };
        debug_assert_eq!((g.out_h(), g.out_w()), (h, wd));
        let (plen, pos) = (g.patch_len(), h * wd);
        let mut cols = vec![T::zero(); plen * pos];
        let mut y = vec![T::zero(); n * o * oh * ow];
        for i in 0..n {
            let xi = &xt.data()[i * c * pos..(i + 1) * c * pos];
            gemm(plen, c, pos, wt.data(), true, xi, false, &mut cols, false);
            let yi = &mut y[i * o * oh * ow..(i + 1) * o * oh * ow];
            col2im_add(&cols, &g, yi);
            for (ch, &bias) in yi.chunks_mut(oh * ow).zip(bt.data()) {
                ch.iter_mut().for_each(|v| *v += bias);
            }
        }
        let value = Tensor::new([n, o, oh, ow], y)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, stride, pad }, rg))
    }

    /// Reverse sweep from a single-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(shape_err(format!("backward from non-scalar {:?}", lv.shape())));
        }
        if !lv.is_finite() {
            return Err(Error::NumericalFailure { tensor: "loss".into() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match node.op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += *x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    self.acc(grads, a, zip_map(g, self.value(b), |d, v| d * v));
                }
                if self.rg(b) {
                    self.acc(grads, b, zip_map(g, self.value(a), |d, v| d * v));
                }
            }
            Op::Scale(x, s) => self.acc(grads, x, g.map(|v| v * s)),
            Op::Shift(x) => self.acc(grads, x, g.clone()),
            Op::Relu(x) => {
                let d = zip_map(g, self.value(x), |d, v| if v > T::zero() { d } else { T::zero() });
                self.acc(grads, x, d);
            }
            Op::LeakyRelu(x, s) => {
                let d = zip_map(g, self.value(x), |d, v| if v > T::zero() { d } else { d * s });
                self.acc(grads, x, d);
            }
            Op::Tanh(x) => self.acc(grads, x, zip_map(g, y, |d, t| d * (T::one() - t * t))),
            Op::Sigmoid(x) => self.acc(grads, x, zip_map(g, y, |d, s| d * s * (T::one() - s))),
            Op::Log(x) => self.acc(grads, x, zip_map(g, self.value(x), |d, v| d / v)),
            Op::Square(x) => {
                let two = T::of(2.0);
                self.acc(grads, x, zip_map(g, self.value(x), |d, v| d * two * v));
            }
            Op::Abs(x) => {
                let d = zip_map(g, self.value(x), |d, v| {
                    if v > T::zero() {
                        d
                    } else if v < T::zero() {
                        -d
                    } else {
                        T::zero()
                    }
                });
                self.acc(grads, x, d);
            }
            Op::Clamp(x, lo, hi) => {
                let d = zip_map(g, self.value(x), |d, v| if v < lo || v > hi { T::zero() } else { d });
                self.acc(grads, x, d);
            }
            Op::Softmax(x) => {
                let last = *y.shape().last().unwrap();
                let mut d = g.clone();
                for (dr, yr) in d.data_mut().chunks_mut(last).zip(y.data().chunks(last)) {
                    let dot: T = dr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for (dv, &yv) in dr.iter_mut().zip(yr) {
                        *dv = yv * (*dv - dot);
                    }
                }
                self.acc(grads, x, d);
            }
            Op::LogSoftmax(x) => {
                let last = *y.shape().last().unwrap();
                let mut d = g.clone();
                for (dr, yr) in d.data_mut().chunks_mut(last).zip(y.data().chunks(last)) {
                    let total: T = dr.iter().copied().sum();
                    for (dv, &lv) in dr.iter_mut().zip(yr) {
                        *dv = *dv - lv.exp() * total;
                    }
                }
                self.acc(grads, x, d);
            }
            Op::SumAll(x) => {
                let shape = self.value(x).shape().to_vec();
                self.acc(grads, x, Tensor::full(shape, g.data()[0]));
            }
            Op::MeanAll(x) => {
                let t = self.value(x);
                let v = g.data()[0] / T::of(t.numel() as f64);
                self.acc(grads, x, Tensor::full(t.shape().to_vec(), v));
            }
            Op::SumLast(x) => {
                let t = self.value(x);
                let last = *t.shape().last().unwrap();
                let data = g.data().iter().flat_map(|&v| core::iter::repeat_n(v, last)).collect();
                self.acc(grads, x, Tensor::new(t.shape().to_vec(), data).unwrap());
            }
            Op::Reshape(x) => {
                let shape = self.value(x).shape().to_vec();
                self.acc(grads, x, g.clone().reshape(shape).unwrap());
            }
            Op::Dense { x, w, b } => self.backprop_dense(x, w, b, g, grads),
            Op::Conv2d { x, w, b, stride, pad } => self.backprop_conv(x, w, b, stride, pad, g, grads),
            Op::ConvTranspose2d { x, w, b, stride, pad } => {
                self.backprop_conv_transpose(x, w, b, stride, pad, g, grads)
            }
        }
    }

    fn backprop_dense(&self, x: Var, w: Var, b: Var, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let (xt, wt) = (self.value(x), self.value(w));
        let (rows, inp, out) = (xt.rows(), wt.shape()[1], wt.shape()[0]);
        if self.rg(x) {
            let mut dx = vec![T::zero(); rows * inp];
            gemm(rows, out, inp, g.data(), false, wt.data(), false, &mut dx, false);
            self.acc(grads, x, Tensor::new(xt.shape().to_vec(), dx).unwrap());
        }
        if self.rg(w) {
            let mut dw = vec![T::zero(); out * inp];
            gemm(out, rows, inp, g.data(), true, xt.data(), false, &mut dw, false);
            self.acc(grads, w, Tensor::new(wt.shape().to_vec(), dw).unwrap());
        }
        if self.rg(b) {
            let mut db = vec![T::zero(); out];
            for r in g.data().chunks(out) {
                db.iter_mut().zip(r).for_each(|(d, &v)| *d += v);
            }
            self.acc(grads, b, Tensor::new([out], db).unwrap());
        }
    }

    fn bias_grad(g: &Tensor<T>) -> Tensor<T> {
        let s = g.shape();
        let (n, o, plane) = (s[0], s[1], s[2] * s[3]);
        let mut db = vec![T::zero(); o];
        for i in 0..n {
            for (ch, d) in db.iter_mut().enumerate() {
                let start = (i * o + ch) * plane;
                *d += g.data()[start..start + plane].iter().copied().sum::<T>();
            }
        }
        Tensor::new([o], db).unwrap()
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_conv(
        &self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let (xt, wt) = (self.value(x), self.value(w));
        let (xs, ws) = (xt.shape(), wt.shape());
        let (n, c, h, wd, o, k) = (xs[0], xs[1], xs[2], xs[3], ws[0], ws[2]);
        let geo = ConvGeometry { channels: c, height: h, width: wd, kernel: k, stride, pad };
        let (plen, pos, img) = (geo.patch_len(), geo.positions(), c * h * wd);
        let mut cols = vec![T::zero(); plen * pos];
        let mut dw = if self.rg(w) { Some(vec![T::zero(); o * plen]) } else { None };
        let mut dx = if self.rg(x) { Some(vec![T::zero(); n * img]) } else { None };
        for i in 0..n {
            let gi = &g.data()[i * o * pos..(i + 1) * o * pos];
            if let Some(dw) = dw.as_mut() {
                im2col(&xt.data()[i * img..(i + 1) * img], &geo, &mut cols);
                gemm(o, pos, plen, gi, false, &cols, true, dw, true);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(plen, o, pos, wt.data(), true, gi, false, &mut cols, false);
                col2im_add(&cols, &geo, &mut dx[i * img..(i + 1) * img]);
            }
        }
        if let Some(dw) = dw {
            self.acc(grads, w, Tensor::new(ws.to_vec(), dw).unwrap());
        }
        if let Some(dx) = dx {
            self.acc(grads, x, Tensor::new(xs.to_vec(), dx).unwrap());
        }
        if self.rg(b) {
            self.acc(grads, b, Self::bias_grad(g));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_conv_transpose(
        &self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let (xt, wt) = (self.value(x), self.value(w));
        let (xs, ws, gs) = (xt.shape(), wt.shape(), g.shape());
        let (n, c, o, k) = (xs[0], xs[1], ws[1], ws[2]);
        let geo = ConvGeometry { channels: o, height: gs[2], width: gs[3], kernel: k, stride, pad };
        let (plen, pos, out_img) = (geo.patch_len(), xs[2] * xs[3], o * gs[2] * gs[3]);
        let mut cols = vec![T::zero(); plen * pos];
        let mut dw = if self.rg(w) { Some(vec![T::zero(); c * plen]) } else { None };
        let mut dx = if self.rg(x) { Some(vec![T::zero(); n * c * pos]) } else { None };
        for i in 0..n {
            if dw.is_none() && dx.is_none() {
                break;
            }
            im2col(&g.data()[i * out_img..(i + 1) * out_img], &geo, &mut cols);
            if let Some(dx) = dx.as_mut() {
                gemm(c, plen, pos, wt.data(), false, &cols, false, &mut dx[i * c * pos..(i + 1) * c * pos], false);
            }
            if let Some(dw) = dw.as_mut() {
                let xi = &xt.data()[i * c * pos..(i + 1) * c * pos];
                gemm(c, pos, plen, xi, false, &cols, true, dw, true);
            }
        }
        if let Some(dw) = dw {
            self.acc(grads, w, Tensor::new(ws.to_vec(), dw).unwrap());
        }
        if let Some(dx) = dx {
            self.acc(grads, x, Tensor::new(xs.to_vec(), dx).unwrap());
        }
        if self.rg(b) {
            self.acc(grads, b, Self::bias_grad(g));
        }
    }
}
