//! Define-by-run reverse-mode autodiff over a Wengert tape.
//!
//! Forward values are computed eagerly as ops are recorded, so the tape is
//! rebuilt every iteration. Backward walks node ids in reverse, which makes
//! the traversal order a pure function of graph construction order.

use super::conv::{conv2d_backward, conv2d_forward};
use super::{ConvSpec, LayerSpec, Tensor, TensorError};
use crate::{sc, Scalar};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
pub enum Op<T: Scalar> {
    Leaf { requires_grad: bool },
    Conv2d { x: usize, w: usize, b: usize, spec: ConvSpec },
    Relu { x: usize },
    Sigmoid { x: usize },
    AvgPool { x: usize, kernel: usize, stride: usize },
    Concat { xs: Vec<usize> },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: T },
    Shift { x: usize, c: T },
    LogMap { x: usize, mu: T },
    Sum { x: usize },
    Rms { x: usize },
    Tile { x: usize, h: usize, w: usize },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode gradients keyed by tape node.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, if it was reached during backward.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`; nodes not on any path to the loss get exact zeros.
    pub fn wrt_or_zeros(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.0].clone()),
        }
    }
}

/// Broadcast relation between two elementwise operands.
enum Pair {
    Same,
    /// Left operand is the single-channel one.
    LhsSingle,
    /// Right operand is the single-channel one.
    RhsSingle,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = match &op {
            Op::Leaf { requires_grad } => *requires_grad,
            Op::Conv2d { x, w, b, .. } => {
                self.nodes[*x].needs_grad || self.nodes[*w].needs_grad || self.nodes[*b].needs_grad
            }
            Op::Relu { x }
            | Op::Sigmoid { x }
            | Op::AvgPool { x, .. }
            | Op::Scale { x, .. }
            | Op::Shift { x, .. }
            | Op::LogMap { x, .. }
            | Op::Sum { x }
            | Op::Rms { x }
            | Op::Tile { x, .. } => self.nodes[*x].needs_grad,
            Op::Concat { xs } => xs.iter().any(|&x| self.nodes[x].needs_grad),
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                self.nodes[*a].needs_grad || self.nodes[*b].needs_grad
            }
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Insert a leaf. Parameters use `requires_grad = true`; inputs and
    /// targets use `false` so backward prunes their subtrees.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf { requires_grad })
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.input(value, false)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var, TensorError> {
        let value = conv2d_forward(self.value(x), self.value(w), self.value(b), &spec)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.0,
                spec,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu { x: x.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(value, Op::Sigmoid { x: x.0 })
    }

    pub fn avg_pool(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var, TensorError> {
        let xs = self.value(x);
        if xs.shape().len() != 4 {
            return Err(TensorError::RankMismatch {
                context: "avg_pool input",
                expected: 4,
                got: xs.shape().to_vec(),
            });
        }
        let (n, c, h, w) = (xs.shape()[0], xs.shape()[1], xs.shape()[2], xs.shape()[3]);
        if kernel > h || kernel > w {
            return Err(TensorError::PoolTooLarge { k: kernel, h, w });
        }
        let oh = (h - kernel) / stride + 1;
        let ow = (w - kernel) / stride + 1;
        let inv = T::one() / sc::<T>((kernel * kernel) as f64);
        let mut out = Tensor::zeros(vec![n, c, oh, ow]);
        for pl in 0..n * c {
            let src = &xs.data()[pl * h * w..(pl + 1) * h * w];
            let dst = &mut out.data_mut()[pl * oh * ow..(pl + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            acc = acc + src[(oy * stride + ky) * w + (ox * stride + kx)];
                        }
                    }
                    dst[oy * ow + ox] = acc * inv;
                }
            }
        }
        Ok(self.push(
            out,
            Op::AvgPool {
                x: x.0,
                kernel,
                stride,
            },
        ))
    }

    /// Concatenate along the channel axis; all other extents must match.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, TensorError> {
        if xs.is_empty() {
            return Err(TensorError::ArityMismatch {
                op: "concat",
                expected: 1,
                got: 0,
            });
        }
        let first = self.value(xs[0]).shape().to_vec();
        if first.len() != 4 {
            return Err(TensorError::RankMismatch {
                context: "concat input",
                expected: 4,
                got: first,
            });
        }
        let (n, h, w) = (first[0], first[2], first[3]);
        let mut c_total = 0;
        for &v in xs {
            let s = self.value(v).shape();
            for (dim, (got, expected)) in [(s[0], n), (s[2], h), (s[3], w)].into_iter().enumerate()
            {
                if got != expected {
                    return Err(TensorError::ShapeMismatch {
                        context: "concat non-channel extent",
                        dim: [0, 2, 3][dim],
                        got,
                        expected,
                    });
                }
            }
            c_total += s[1];
        }
        let mut out = Tensor::zeros(vec![n, c_total, h, w]);
        let plane = h * w;
        for ni in 0..n {
            let mut c_off = 0;
            for &v in xs {
                let src = self.value(v);
                let c = src.shape()[1];
                let from = &src.data()[ni * c * plane..(ni + 1) * c * plane];
                let to = &mut out.data_mut()
                    [(ni * c_total + c_off) * plane..(ni * c_total + c_off + c) * plane];
                to.copy_from_slice(from);
                c_off += c;
            }
        }
        Ok(self.push(
            out,
            Op::Concat {
                xs: xs.iter().map(|v| v.0).collect(),
            },
        ))
    }

    fn classify_pair(&self, a: Var, b: Var) -> Result<Pair, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            return Ok(Pair::Same);
        }
        if sa.len() == 4
            && sb.len() == 4
            && sa[0] == sb[0]
            && sa[2] == sb[2]
            && sa[3] == sb[3]
        {
            if sa[1] == 1 && sb[1] > 1 {
                return Ok(Pair::LhsSingle);
            }
            if sb[1] == 1 && sa[1] > 1 {
                return Ok(Pair::RhsSingle);
            }
        }
        Err(TensorError::BadBroadcast {
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    fn binary_elementwise(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        make: impl Fn(usize, usize) -> Op<T>,
    ) -> Result<Var, TensorError> {
        let pair = self.classify_pair(a, b)?;
        let value = match pair {
            Pair::Same => {
                let (va, vb) = (self.value(a), self.value(b));
                Tensor::new(
                    va.shape().to_vec(),
                    va.data()
                        .iter()
                        .zip(vb.data())
                        .map(|(&x, &y)| f(x, y))
                        .collect(),
                )
            }
            Pair::LhsSingle => self.broadcast_apply(b, a, |full, single| f(single, full)),
            Pair::RhsSingle => self.broadcast_apply(a, b, &f),
        };
        Ok(self.push(value, make(a.0, b.0)))
    }

    /// Apply `f(full_elem, single_channel_elem)` broadcasting the single
    /// channel of `single` across every channel of `full`.
    fn broadcast_apply(&self, full: Var, single: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let vf = self.value(full);
        let vs = self.value(single);
        let (n, c, h, w) = (
            vf.shape()[0],
            vf.shape()[1],
            vf.shape()[2],
            vf.shape()[3],
        );
        let plane = h * w;
        let mut out = Tensor::zeros(vf.shape().to_vec());
        for ni in 0..n {
            let s_plane = &vs.data()[ni * plane..(ni + 1) * plane];
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                let from = &vf.data()[base..base + plane];
                let to = &mut out.data_mut()[base..base + plane];
                for i in 0..plane {
                    to[i] = f(from[i], s_plane[i]);
                }
            }
        }
        out
    }

    /// Elementwise sum; shapes must match or differ only on the channel axis.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_elementwise(a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    /// Elementwise difference (no broadcast).
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::BadBroadcast {
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        self.binary_elementwise(a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    /// Elementwise product; shapes must match or differ only on the channel axis.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_elementwise(a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale { x: x.0, c })
    }

    pub fn shift(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::Shift { x: x.0, c })
    }

    /// Compressive log mapping `ln(1 + mu*x) / ln(1 + mu)`, defined for x >= 0.
    pub fn log_map(&mut self, x: Var, mu: T) -> Result<Var, TensorError> {
        if self.value(x).data().iter().any(|&v| v < T::zero()) {
            return Err(TensorError::NegativeInput("log_map"));
        }
        let denom = (T::one() + mu).ln();
        let value = self.value(x).map(|v| (T::one() + mu * v).ln() / denom);
        Ok(self.push(value, Op::LogMap { x: x.0, mu }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc = acc + v;
        }
        self.push(Tensor::scalar(acc), Op::Sum { x: x.0 })
    }

    /// Root-mean-square over all elements.
    pub fn rms(&mut self, x: Var) -> Var {
        let xs = self.value(x);
        let mut acc = T::zero();
        for &v in xs.data() {
            acc = acc + v * v;
        }
        let value = (acc / sc::<T>(xs.numel() as f64)).sqrt();
        self.push(Tensor::scalar(value), Op::Rms { x: x.0 })
    }

    /// Tile a (N,C,1,1) descriptor to (N,C,h,w): nearest-neighbor broadcast.
    pub fn tile_spatial(&mut self, x: Var, h: usize, w: usize) -> Result<Var, TensorError> {
        let xs = self.value(x);
        if xs.shape().len() != 4 || xs.shape()[2] != 1 || xs.shape()[3] != 1 {
            return Err(TensorError::RankMismatch {
                context: "tile_spatial expects (N,C,1,1)",
                expected: 4,
                got: xs.shape().to_vec(),
            });
        }
        let (n, c) = (xs.shape()[0], xs.shape()[1]);
        let mut out = Tensor::zeros(vec![n, c, h, w]);
        for pl in 0..n * c {
            let v = xs.data()[pl];
            out.data_mut()[pl * h * w..(pl + 1) * h * w].fill(v);
        }
        Ok(self.push(out, Op::Tile { x: x.0, h, w }))
    }

    /// Dispatch a [`LayerSpec`] over its inputs. Conv expects
    /// `[input, weight, bias]`; binary kinds expect two inputs; the rest one.
    pub fn apply_primitive(&mut self, spec: &LayerSpec, inputs: &[Var]) -> Result<Var, TensorError> {
        let need = |n: usize, op: &'static str| -> Result<(), TensorError> {
            if inputs.len() != n {
                Err(TensorError::ArityMismatch {
                    op,
                    expected: n,
                    got: inputs.len(),
                })
            } else {
                Ok(())
            }
        };
        match spec {
            LayerSpec::Conv(cs) => {
                need(3, "conv")?;
                self.conv2d(inputs[0], inputs[1], inputs[2], *cs)
            }
            LayerSpec::Relu => {
                need(1, "relu")?;
                Ok(self.relu(inputs[0]))
            }
            LayerSpec::Sigmoid => {
                need(1, "sigmoid")?;
                Ok(self.sigmoid(inputs[0]))
            }
            LayerSpec::AvgPool { kernel, stride } => {
                need(1, "avg_pool")?;
                self.avg_pool(inputs[0], *kernel, *stride)
            }
            LayerSpec::Concat => self.concat(inputs),
            LayerSpec::Add => {
                need(2, "add")?;
                self.add(inputs[0], inputs[1])
            }
            LayerSpec::Mul => {
                need(2, "mul")?;
                self.mul(inputs[0], inputs[1])
            }
        }
    }

    /// Reverse-mode gradients of a scalar node w.r.t. every reachable node.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>, TensorError> {
        if self.value(out).numel() != 1 {
            return Err(TensorError::NonScalarBackward(
                self.value(out).shape().to_vec(),
            ));
        }
        let mut acc: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        acc[out.0] = Some(Tensor::scalar(T::one()));

        for id in (0..=out.0).rev() {
            if !self.nodes[id].needs_grad {
                acc[id] = None;
                continue;
            }
            let Some(g) = acc[id].take() else { continue };
            self.accumulate(id, &g, &mut acc);
            acc[id] = Some(g);
        }

        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads: acc,
        })
    }

    fn add_grad(&self, slot: &mut Option<Tensor<T>>, shape: &[usize], delta: impl Fn(&mut Tensor<T>)) {
        let t = slot.get_or_insert_with(|| Tensor::zeros(shape.to_vec()));
        delta(t);
    }

    fn accumulate(&self, id: usize, g: &Tensor<T>, acc: &mut [Option<Tensor<T>>]) {
        let needs = |i: usize| self.nodes[i].needs_grad;
        match &self.nodes[id].op {
            Op::Leaf { .. } => {}
            Op::Conv2d { x, w, b, spec } => {
                let (gx, gw, gb) = conv2d_backward(
                    &self.nodes[*x].value,
                    &self.nodes[*w].value,
                    g,
                    spec,
                    needs(*x),
                    needs(*w) || needs(*b),
                );
                for (src, dst) in [(gx, *x), (gw, *w), (gb, *b)] {
                    let Some(src) = src else { continue };
                    if needs(dst) {
                        self.add_grad(&mut acc[dst], src.shape(), |t| {
                            for (o, &d) in t.data_mut().iter_mut().zip(src.data()) {
                                *o += d;
                            }
                        });
                    }
                }
            }
            Op::Relu { x } => {
                if needs(*x) {
                    let xv = &self.nodes[*x].value;
                    self.add_grad(&mut acc[*x], xv.shape(), |t| {
                        for ((o, &xi), &gi) in t.data_mut().iter_mut().zip(xv.data()).zip(g.data())
                        {
                            if xi > T::zero() {
                                *o += gi;
                            }
                        }
                    });
                }
            }
            Op::Sigmoid { x } => {
                if needs(*x) {
                    let yv = &self.nodes[id].value;
                    self.add_grad(&mut acc[*x], yv.shape(), |t| {
                        for ((o, &yi), &gi) in t.data_mut().iter_mut().zip(yv.data()).zip(g.data())
                        {
                            *o += gi * yi * (T::one() - yi);
                        }
                    });
                }
            }
            Op::AvgPool { x, kernel, stride } => {
                if needs(*x) {
                    let xv = &self.nodes[*x].value;
                    let (h, w) = (xv.shape()[2], xv.shape()[3]);
                    let (oh, ow) = (
                        self.nodes[id].value.shape()[2],
                        self.nodes[id].value.shape()[3],
                    );
                    let planes = xv.shape()[0] * xv.shape()[1];
                    let inv = T::one() / sc::<T>((kernel * kernel) as f64);
                    self.add_grad(&mut acc[*x], xv.shape(), |t| {
                        for pl in 0..planes {
                            let gp = &g.data()[pl * oh * ow..(pl + 1) * oh * ow];
                            let tp = &mut t.data_mut()[pl * h * w..(pl + 1) * h * w];
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let gv = gp[oy * ow + ox] * inv;
                                    for ky in 0..*kernel {
                                        for kx in 0..*kernel {
                                            tp[(oy * stride + ky) * w + (ox * stride + kx)] += gv;
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::Concat { xs } => {
                let out_c = self.nodes[id].value.shape()[1];
                let (n, h, w) = (
                    self.nodes[id].value.shape()[0],
                    self.nodes[id].value.shape()[2],
                    self.nodes[id].value.shape()[3],
                );
                let plane = h * w;
                let mut c_off = 0;
                for &xi in xs {
                    let c = self.nodes[xi].value.shape()[1];
                    if needs(xi) {
                        let shape = self.nodes[xi].value.shape().to_vec();
                        self.add_grad(&mut acc[xi], &shape, |t| {
                            for ni in 0..n {
                                let src = &g.data()[(ni * out_c + c_off) * plane
                                    ..(ni * out_c + c_off + c) * plane];
                                let dst =
                                    &mut t.data_mut()[ni * c * plane..(ni + 1) * c * plane];
                                for (o, &d) in dst.iter_mut().zip(src) {
                                    *o += d;
                                }
                            }
                        });
                    }
                    c_off += c;
                }
            }
            Op::Add { a, b } => {
                for side in [*a, *b] {
                    if needs(side) {
                        self.accumulate_maybe_broadcast(side, g, acc, None);
                    }
                }
            }
            Op::Sub { a, b } => {
                if needs(*a) {
                    self.accumulate_maybe_broadcast(*a, g, acc, None);
                }
                if needs(*b) {
                    let neg = g.map(|v| -v);
                    self.accumulate_maybe_broadcast(*b, &neg, acc, None);
                }
            }
            Op::Mul { a, b } => {
                if needs(*a) {
                    self.accumulate_maybe_broadcast(*a, g, acc, Some(*b));
                }
                if needs(*b) {
                    self.accumulate_maybe_broadcast(*b, g, acc, Some(*a));
                }
            }
            Op::Scale { x, c } => {
                if needs(*x) {
                    self.add_grad(&mut acc[*x], g.shape(), |t| {
                        for (o, &gi) in t.data_mut().iter_mut().zip(g.data()) {
                            *o += gi * *c;
                        }
                    });
                }
            }
            Op::Shift { x, .. } => {
                if needs(*x) {
                    self.add_grad(&mut acc[*x], g.shape(), |t| {
                        for (o, &gi) in t.data_mut().iter_mut().zip(g.data()) {
                            *o += gi;
                        }
                    });
                }
            }
            Op::LogMap { x, mu } => {
                if needs(*x) {
                    let xv = &self.nodes[*x].value;
                    let denom = (T::one() + *mu).ln();
                    self.add_grad(&mut acc[*x], xv.shape(), |t| {
                        for ((o, &xi), &gi) in t.data_mut().iter_mut().zip(xv.data()).zip(g.data())
                        {
                            *o += gi * *mu / ((T::one() + *mu * xi) * denom);
                        }
                    });
                }
            }
            Op::Sum { x } => {
                if needs(*x) {
                    let gv = g.item();
                    let shape = self.nodes[*x].value.shape().to_vec();
                    self.add_grad(&mut acc[*x], &shape, |t| {
                        for o in t.data_mut() {
                            *o += gv;
                        }
                    });
                }
            }
            Op::Rms { x } => {
                if needs(*x) {
                    let xv = &self.nodes[*x].value;
                    let y = self.nodes[id].value.item();
                    let gv = g.item();
                    // d rms / d x_i = x_i / (N * rms); all-zero input has
                    // no descent direction, so the gradient is left at 0.
                    if y > T::zero() {
                        let k = gv / (sc::<T>(xv.numel() as f64) * y);
                        self.add_grad(&mut acc[*x], xv.shape(), |t| {
                            for (o, &xi) in t.data_mut().iter_mut().zip(xv.data()) {
                                *o += xi * k;
                            }
                        });
                    } else {
                        self.add_grad(&mut acc[*x], xv.shape(), |_| {});
                    }
                }
            }
            Op::Tile { x, h, w } => {
                if needs(*x) {
                    let shape = self.nodes[*x].value.shape().to_vec();
                    let planes = shape[0] * shape[1];
                    let plane = h * w;
                    self.add_grad(&mut acc[*x], &shape, |t| {
                        for pl in 0..planes {
                            let mut s = T::zero();
                            for &gi in &g.data()[pl * plane..(pl + 1) * plane] {
                                s = s + gi;
                            }
                            t.data_mut()[pl] += s;
                        }
                    });
                }
            }
        }
    }

    /// Accumulate `g` (optionally times factor node's value) into `dst`,
    /// collapsing over channels when `dst` is the single-channel operand.
    fn accumulate_maybe_broadcast(
        &self,
        dst: usize,
        g: &Tensor<T>,
        acc: &mut [Option<Tensor<T>>],
        factor: Option<usize>,
    ) {
        let dst_shape = self.nodes[dst].value.shape().to_vec();
        let same = dst_shape == g.shape();
        if same {
            match factor {
                None => self.add_grad(&mut acc[dst], &dst_shape, |t| {
                    for (o, &gi) in t.data_mut().iter_mut().zip(g.data()) {
                        *o += gi;
                    }
                }),
                Some(f) => {
                    let fv = &self.nodes[f].value;
                    if fv.shape() == g.shape() {
                        self.add_grad(&mut acc[dst], &dst_shape, |t| {
                            for ((o, &gi), &fi) in
                                t.data_mut().iter_mut().zip(g.data()).zip(fv.data())
                            {
                                *o += gi * fi;
                            }
                        });
                    } else {
                        // factor is the single-channel side: broadcast it
                        let (n, c, h, w) =
                            (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
                        let plane = h * w;
                        self.add_grad(&mut acc[dst], &dst_shape, |t| {
                            for ni in 0..n {
                                let fp = &fv.data()[ni * plane..(ni + 1) * plane];
                                for ci in 0..c {
                                    let base = (ni * c + ci) * plane;
                                    let gp = &g.data()[base..base + plane];
                                    let tp = &mut t.data_mut()[base..base + plane];
                                    for i in 0..plane {
                                        tp[i] += gp[i] * fp[i];
                                    }
                                }
                            }
                        });
                    }
                }
            }
        } else {
            // dst is the single-channel operand: sum over the channel axis.
            let (n, c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
            let plane = h * w;
            self.add_grad(&mut acc[dst], &dst_shape, |t| {
                for ni in 0..n {
                    let tp_base = ni * plane;
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        let gp = &g.data()[base..base + plane];
                        match factor {
                            None => {
                                for i in 0..plane {
                                    t.data_mut()[tp_base + i] += gp[i];
                                }
                            }
                            Some(f) => {
                                let fp = &self.nodes[f].value.data()[base..base + plane];
                                for i in 0..plane {
                                    t.data_mut()[tp_base + i] += gp[i] * fp[i];
                                }
                            }
                        }
                    }
                }
            });
        }
    }
}
