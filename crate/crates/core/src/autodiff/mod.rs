//! Reverse-mode automatic differentiation over a dynamically recorded graph.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each operation appends a
//! node holding its output value and the inputs it needs for the backward
//! rule, so node indices are a topological order by construction and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! Nodes only take part in the backward sweep when some input requires a
//! gradient; [`Graph::stop_gradient`] produces a node that never does, which
//! cuts every path through it.

mod broadcast;
mod conv;
pub mod gradcheck;

use broadcast::Broadcast;
use conv::ConvGeometry;

use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    #[cfg(test)]
    pub(crate) fn from_index(index: usize) -> Self {
        Self(index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    /// N×C×H×W → N×C×1×1
    GlobalAvg,
    /// N×C×H×W → N×C×out_h×out_w, each cell the mean of its bin.
    AdaptiveAvg { out_h: usize, out_w: usize },
    /// N×C×H×W → N×1×H×W
    ChannelMax,
    /// N×C×H×W → N×1×H×W
    ChannelAvg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    StopGradient { x: Var },
    Conv2d { input: Var, weight: Var, bias: Var, geo: ConvGeometry },
    Activation { x: Var, kind: Activation },
    Abs { x: Var },
    Binary { a: Var, b: Var, op: BinaryOp, bc: Broadcast },
    Scale { x: Var, factor: f64 },
    Clamp { x: Var, lo: f64, hi: f64 },
    Pool { x: Var, kind: Pool },
    ConcatChannels { parts: Vec<Var> },
    Reshape { x: Var, shape: Vec<usize> },
    Sum { x: Var },
    Mean { x: Var },
    ForwardDiff { x: Var, axis: Axis },
}

impl Op {
    fn for_each_input(&self, mut f: impl FnMut(Var)) {
        match self {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, .. } => {
                f(*input);
                f(*weight);
                f(*bias);
            }
            Op::Binary { a, b, .. } => {
                f(*a);
                f(*b);
            }
            Op::ConcatChannels { parts } => parts.iter().copied().for_each(f),
            Op::StopGradient { x }
            | Op::Activation { x, .. }
            | Op::Abs { x }
            | Op::Scale { x, .. }
            | Op::Clamp { x, .. }
            | Op::Pool { x, .. }
            | Op::Reshape { x, .. }
            | Op::Sum { x }
            | Op::Mean { x }
            | Op::ForwardDiff { x, .. } => f(*x),
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Dynamic computation graph (the tape).
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Bin boundaries used by adaptive average pooling.
fn adaptive_bin(i: usize, out: usize, size: usize) -> (usize, usize) {
    let start = i * size / out;
    let end = ((i + 1) * size).div_ceil(out);
    (start, end)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// Gradient accumulated into a leaf by the last [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Mutable data of leaf `v`. Values downstream of `v` go stale until
    /// [`Graph::recompute`] runs over [`Graph::downstream`] of it.
    pub fn leaf_data_mut(&mut self, v: Var) -> Result<&mut [T], TensorError> {
        let node = &mut self.nodes[v.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(TensorError::Contract(format!("node {} is not a leaf", v.0)));
        }
        Ok(node.value.data_mut())
    }

    /// Every node whose value depends on `v`, in topological order.
    pub fn downstream(&self, v: Var) -> Vec<Var> {
        self.dependents(v, true)
    }

    /// Like [`Graph::downstream`], but stop-gradient outputs are treated as
    /// constants: the tape's own notion of what `v` influences.
    pub fn differentiable_downstream(&self, v: Var) -> Vec<Var> {
        self.dependents(v, false)
    }

    fn dependents(&self, v: Var, through_stop_gradient: bool) -> Vec<Var> {
        let mut dirty = vec![false; self.nodes.len()];
        dirty[v.0] = true;
        let mut out = Vec::new();
        for idx in v.0 + 1..self.nodes.len() {
            let mut hit = false;
            self.nodes[idx].op.for_each_input(|x| hit |= dirty[x.0]);
            if hit && (through_stop_gradient || !matches!(self.nodes[idx].op, Op::StopGradient { .. })) {
                dirty[idx] = true;
                out.push(Var(idx));
            }
        }
        out
    }

    /// Re-evaluates `nodes`, in order, from the current values of their inputs.
    pub fn recompute(&mut self, nodes: &[Var]) -> Result<(), TensorError> {
        for &v in nodes {
            let value = self.compute(&self.nodes[v.0].op)?;
            self.nodes[v.0].value = value;
        }
        Ok(())
    }

    /// Writes, for each output element of a piecewise op, which smooth piece
    /// its input sits on (relu/abs sign, clamp region, channel-max argmax).
    /// Returns false, leaving `out` empty, for smooth ops.
    pub(crate) fn branch_codes(&self, v: Var, out: &mut Vec<u32>) -> bool {
        out.clear();
        let region = |x: T, lo: T, hi: T| -> u32 {
            if x < lo {
                0
            } else if x == lo {
                1
            } else if x < hi {
                2
            } else if x == hi {
                3
            } else {
                4
            }
        };
        let val = |x: &Var| self.nodes[x.0].value.data();
        match &self.nodes[v.0].op {
            Op::Activation { x, kind: Activation::Relu } | Op::Abs { x } => {
                out.extend(val(x).iter().map(|&e| region(e, T::zero(), T::infinity())));
            }
            Op::Clamp { x, lo, hi } => {
                let (l, h) = (T::from_f64_lossy(*lo), T::from_f64_lossy(*hi));
                out.extend(val(x).iter().map(|&e| region(e, l, h)));
            }
            Op::Pool { x, kind: Pool::ChannelMax } => {
                let [_, c, h, w] = self.nodes[x.0].value.dims4("pool").unwrap();
                let hw = h * w;
                for sample in val(x).chunks(c * hw) {
                    for p in 0..hw {
                        let mut best = 0;
                        for ch in 1..c {
                            if sample[ch * hw + p] > sample[best * hw + p] {
                                best = ch;
                            }
                        }
                        // a tie is itself a kink
                        let tied = (0..c).filter(|&ch| sample[ch * hw + p] == sample[best * hw + p]).count() > 1;
                        out.push(if tied { u32::MAX } else { best as u32 });
                    }
                }
            }
            _ => return false,
        }
        true
    }

    /// Output value of a non-leaf `op` from the current values of its inputs.
    fn compute(&self, op: &Op) -> Result<Tensor<T>, TensorError> {
        let val = |v: &Var| &self.nodes[v.0].value;
        Ok(match op {
            Op::Leaf => {
                return Err(TensorError::Contract("leaves have no forward rule".into()));
            }
            Op::StopGradient { x } => val(x).clone(),
            Op::Conv2d { input, weight, bias, geo } => {
                let out = conv::forward(geo, val(input).data(), val(weight).data(), val(bias).data());
                Tensor::new(vec![geo.batch, geo.out_channels, geo.out_height, geo.out_width], out)?
            }
            Op::Activation { x, kind: Activation::Relu } => val(x).map(|v| v.max(T::zero())),
            Op::Activation { x, kind: Activation::Sigmoid } => val(x).map(sigmoid),
            Op::Abs { x } => val(x).map(T::abs),
            Op::Binary { a, b, op, bc } => {
                let (av, bv) = (val(a).data(), val(b).data());
                let mut out = vec![T::zero(); bc.numel()];
                match op {
                    BinaryOp::Add => bc.for_each(|o, i, j| out[o] = av[i] + bv[j]),
                    BinaryOp::Sub => bc.for_each(|o, i, j| out[o] = av[i] - bv[j]),
                    BinaryOp::Mul => bc.for_each(|o, i, j| out[o] = av[i] * bv[j]),
                    BinaryOp::Div => bc.for_each(|o, i, j| out[o] = av[i] / bv[j]),
                    BinaryOp::Pow => bc.for_each(|o, i, j| out[o] = av[i].powf(bv[j])),
                }
                Tensor::new(bc.out_shape.clone(), out)?
            }
            Op::Scale { x, factor } => {
                let f = T::from_f64_lossy(*factor);
                val(x).map(|v| v * f)
            }
            Op::Clamp { x, lo, hi } => {
                let (l, h) = (T::from_f64_lossy(*lo), T::from_f64_lossy(*hi));
                val(x).map(|v| v.max(l).min(h))
            }
            Op::Pool { x, kind } => pool_forward(val(x), *kind)?,
            Op::ConcatChannels { parts } => {
                let [n, _, h, w] = val(&parts[0]).dims4("concat_channels")?;
                let channels: usize = parts.iter().map(|p| val(p).shape()[1]).sum();
                let mut out = Vec::with_capacity(n * channels * h * w);
                for s in 0..n {
                    for p in parts {
                        let v = val(p);
                        let len = v.shape()[1] * h * w;
                        out.extend_from_slice(&v.data()[s * len..(s + 1) * len]);
                    }
                }
                Tensor::new(vec![n, channels, h, w], out)?
            }
            Op::Reshape { x, shape } => val(x).reshape(shape.clone())?,
            Op::Sum { x } => Tensor::scalar(val(x).sum()),
            Op::Mean { x } => Tensor::scalar(val(x).mean()),
            Op::ForwardDiff { x, axis } => {
                let src = val(x);
                let [n, c, h, w] = src.dims4("forward_diff")?;
                let mut out = vec![T::zero(); n * c * h * w];
                for (plane, dst) in src.data().chunks(h * w).zip(out.chunks_mut(h * w)) {
                    for y in 0..h {
                        for xx in 0..w {
                            let i = y * w + xx;
                            dst[i] = match axis {
                                Axis::Horizontal if xx + 1 < w => plane[i + 1] - plane[i],
                                Axis::Vertical if y + 1 < h => plane[i + w] - plane[i],
                                _ => T::zero(),
                            };
                        }
                    }
                }
                Tensor::new(vec![n, c, h, w], out)?
            }
        })
    }

    fn record(&mut self, op: Op) -> Result<Var, TensorError> {
        let value = self.compute(&op)?;
        let mut rg = false;
        op.for_each_input(|v| rg |= self.requires_grad(v));
        Ok(self.push(value, op, rg))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let in_dims = self.value(input).dims4("conv2d")?;
        let w_dims = self.value(weight).dims4("conv2d")?;
        let geo = ConvGeometry::new(in_dims, w_dims, self.value(bias).numel(), stride, padding)?;
        self.record(Op::Conv2d { input, weight, bias, geo })
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        self.record(Op::Activation { x, kind }).expect("unary ops are infallible")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.record(Op::Abs { x }).expect("unary ops are infallible")
    }

    /// Element-wise binary op. `b` may broadcast over `a` (or `a` over `b`)
    /// along any axis of size 1; ranks must agree.
    pub fn elementwise(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var, TensorError> {
        let name = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        };
        let bc = Broadcast::new(name, self.shape(a), self.shape(b))?;
        self.record(Op::Binary { a, b, op, bc })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryOp::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryOp::Div)
    }

    pub fn pow(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, BinaryOp::Pow)
    }

    /// `x` raised to a constant exponent.
    pub fn powf(&mut self, x: Var, exponent: f64) -> Result<Var, TensorError> {
        let rank = self.value(x).rank();
        let e = self.constant(Tensor::full(vec![1; rank], T::from_f64_lossy(exponent)));
        self.pow(x, e)
    }

    pub fn square(&mut self, x: Var) -> Result<Var, TensorError> {
        self.mul(x, x)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.record(Op::Scale { x, factor }).expect("unary ops are infallible")
    }

    /// Clamps into `[lo, hi]`; the gradient passes only where the input was
    /// already inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.record(Op::Clamp { x, lo, hi }).expect("unary ops are infallible")
    }

    /// Forward identity that blocks every gradient path through `x`.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::StopGradient { x }, false)
    }

    pub fn pool(&mut self, x: Var, kind: Pool) -> Result<Var, TensorError> {
        self.record(Op::Pool { x, kind })
    }

    /// Concatenates N×Cᵢ×H×W tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = self.value(*parts.first().ok_or_else(|| {
            TensorError::Contract("concat_channels needs at least one input".into())
        })?)
        .dims4("concat_channels")?;
        for &p in parts {
            let d = self.value(p).dims4("concat_channels")?;
            for axis in [0, 2, 3] {
                if d[axis] != first[axis] {
                    return Err(TensorError::Dimension {
                        op: "concat_channels",
                        detail: format!("axis {axis}: {} vs {}", d[axis], first[axis]),
                    });
                }
            }
        }
        self.record(Op::ConcatChannels { parts: parts.to_vec() })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        self.record(Op::Reshape { x, shape })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.record(Op::Sum { x }).expect("reductions are infallible")
    }

    pub fn mean(&mut self, x: Var) -> Var {
        self.record(Op::Mean { x }).expect("reductions are infallible")
    }

    /// Forward difference along a spatial axis with a replicated boundary,
    /// so the last column (row) differences are zero. Shape-preserving.
    pub fn forward_diff(&mut self, x: Var, axis: Axis) -> Result<Var, TensorError> {
        self.record(Op::ForwardDiff { x, axis })
    }

    /// Mean of squared element differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension {
                op: "mse",
                detail: format!("shapes {:?} and {:?} differ", self.shape(a), self.shape(b)),
            });
        }
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        Ok(self.mean(sq))
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients from a previous
    /// sweep are discarded; within one sweep contributions accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let numel = self.value(loss).numel();
        if numel != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.requires_grad(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
        }
        self.grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (g, &node.op) {
                (Some(g), Op::Leaf) => Some(Tensor::new(node.value.shape().to_vec(), g).unwrap()),
                _ => None,
            })
            .collect();
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        let len = self.nodes[v.0].value.numel();
        let mut buf = grads[v.0].take().unwrap_or_else(|| vec![T::zero(); len]);
        f(&mut buf);
        grads[v.0] = Some(buf);
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::StopGradient { .. } => {}
            Op::Conv2d { input, weight, bias, geo } => {
                let x = self.nodes[input.0].value.data();
                let w = self.nodes[weight.0].value.data();
                if wants(*input) {
                    self.accumulate(grads, *input, |gi| {
                        conv::backward(geo, x, w, g, Some(gi), None, None)
                    });
                }
                if wants(*weight) {
                    self.accumulate(grads, *weight, |gw| {
                        conv::backward(geo, x, w, g, None, Some(gw), None)
                    });
                }
                if wants(*bias) {
                    self.accumulate(grads, *bias, |gb| {
                        conv::backward(geo, x, w, g, None, None, Some(gb))
                    });
                }
            }
            Op::Activation { x, kind } => {
                if !wants(*x) {
                    return;
                }
                let inp = self.nodes[x.0].value.data();
                let out = node.value.data();
                self.accumulate(grads, *x, |gx| match kind {
                    Activation::Relu => {
                        for ((d, &gi), &xi) in gx.iter_mut().zip(g).zip(inp) {
                            if xi > T::zero() {
                                *d += gi;
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        for ((d, &gi), &y) in gx.iter_mut().zip(g).zip(out) {
                            *d += gi * y * (T::one() - y);
                        }
                    }
                });
            }
            Op::Abs { x } => {
                if !wants(*x) {
                    return;
                }
                let inp = self.nodes[x.0].value.data();
                self.accumulate(grads, *x, |gx| {
                    for ((d, &gi), &xi) in gx.iter_mut().zip(g).zip(inp) {
                        if xi > T::zero() {
                            *d += gi;
                        } else if xi < T::zero() {
                            *d -= gi;
                        }
                    }
                });
            }
            Op::Binary { a, b, op, bc } => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let out = node.value.data();
                // a == b (x·x) is handled by the two sequential accumulations.
                if wants(*a) {
                    self.accumulate(grads, *a, |ga| match op {
                        BinaryOp::Add | BinaryOp::Sub => bc.for_each(|o, i, _| ga[i] += g[o]),
                        BinaryOp::Mul => bc.for_each(|o, i, j| ga[i] += g[o] * bv[j]),
                        BinaryOp::Div => bc.for_each(|o, i, j| ga[i] += g[o] / bv[j]),
                        BinaryOp::Pow => bc.for_each(|o, i, j| {
                            ga[i] += g[o] * bv[j] * av[i].powf(bv[j] - T::one())
                        }),
                    });
                }
                if wants(*b) {
                    self.accumulate(grads, *b, |gb| match op {
                        BinaryOp::Add => bc.for_each(|o, _, j| gb[j] += g[o]),
                        BinaryOp::Sub => bc.for_each(|o, _, j| gb[j] -= g[o]),
                        BinaryOp::Mul => bc.for_each(|o, i, j| gb[j] += g[o] * av[i]),
                        BinaryOp::Div => {
                            bc.for_each(|o, i, j| gb[j] -= g[o] * av[i] / (bv[j] * bv[j]))
                        }
                        BinaryOp::Pow => bc.for_each(|o, i, j| gb[j] += g[o] * out[o] * av[i].ln()),
                    });
                }
            }
            Op::Scale { x, factor } => {
                if wants(*x) {
                    let f = T::from_f64_lossy(*factor);
                    self.accumulate(grads, *x, |gx| {
                        for (d, &gi) in gx.iter_mut().zip(g) {
                            *d += gi * f;
                        }
                    });
                }
            }
            Op::Clamp { x, lo, hi } => {
                if wants(*x) {
                    let (l, h) = (T::from_f64_lossy(*lo), T::from_f64_lossy(*hi));
                    let inp = self.nodes[x.0].value.data();
                    self.accumulate(grads, *x, |gx| {
                        for ((d, &gi), &xi) in gx.iter_mut().zip(g).zip(inp) {
                            if xi >= l && xi <= h {
                                *d += gi;
                            }
                        }
                    });
                }
            }
            Op::Pool { x, kind } => {
                if wants(*x) {
                    let inp = &self.nodes[x.0].value;
                    self.accumulate(grads, *x, |gx| pool_backward(inp, *kind, g, gx));
                }
            }
            Op::ConcatChannels { parts } => {
                let [n, _, h, w] = node.value.dims4("concat_channels").unwrap();
                let total = node.value.numel() / n;
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.shape()[1] * h * w;
                    if wants(p) {
                        self.accumulate(grads, p, |gp| {
                            for s in 0..n {
                                let src = &g[s * total + offset..s * total + offset + len];
                                for (d, &gi) in gp[s * len..(s + 1) * len].iter_mut().zip(src) {
                                    *d += gi;
                                }
                            }
                        });
                    }
                    offset += len;
                }
            }
            Op::Reshape { x, .. } => {
                if wants(*x) {
                    self.accumulate(grads, *x, |gx| {
                        for (d, &gi) in gx.iter_mut().zip(g) {
                            *d += gi;
                        }
                    });
                }
            }
            Op::Sum { x } | Op::Mean { x } => {
                if wants(*x) {
                    let n = self.nodes[x.0].value.numel();
                    let share = if matches!(node.op, Op::Mean { .. }) {
                        g[0] / T::from_usize(n.max(1)).unwrap()
                    } else {
                        g[0]
                    };
                    self.accumulate(grads, *x, |gx| gx.iter_mut().for_each(|d| *d += share));
                }
            }
            Op::ForwardDiff { x, axis } => {
                if !wants(*x) {
                    return;
                }
                let [_, _, h, w] = node.value.dims4("forward_diff").unwrap();
                self.accumulate(grads, *x, |gx| {
                    for (plane, gp) in gx.chunks_mut(h * w).zip(g.chunks(h * w)) {
                        for y in 0..h {
                            for xx in 0..w {
                                let i = y * w + xx;
                                match axis {
                                    Axis::Horizontal if xx + 1 < w => {
                                        plane[i + 1] += gp[i];
                                        plane[i] -= gp[i];
                                    }
                                    Axis::Vertical if y + 1 < h => {
                                        plane[i + w] += gp[i];
                                        plane[i] -= gp[i];
                                    }
                                    _ => {}
                                }
                            }
                        }
                    }
                });
            }
        }
    }
}

fn pool_forward<T: Scalar>(x: &Tensor<T>, kind: Pool) -> Result<Tensor<T>, TensorError> {
    let [n, c, h, w] = x.dims4("pool")?;
    if h == 0 || w == 0 || c == 0 {
        return Err(TensorError::Dimension {
            op: "pool",
            detail: format!("empty extent in shape {:?}", x.shape()),
        });
    }
    let src = x.data();
    let hw = h * w;
    match kind {
        Pool::GlobalAvg => {
            let inv = T::one() / T::from_usize(hw).unwrap();
            let out = src.chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
            Tensor::new(vec![n, c, 1, 1], out)
        }
        Pool::AdaptiveAvg { out_h, out_w } => {
            if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
                return Err(TensorError::Dimension {
                    op: "adaptive_avg_pool",
                    detail: format!("output {out_h}×{out_w} must be within 1..={h}×1..={w}"),
                });
            }
            let mut out = Vec::with_capacity(n * c * out_h * out_w);
            for plane in src.chunks(hw) {
                for by in 0..out_h {
                    let (y0, y1) = adaptive_bin(by, out_h, h);
                    for bx in 0..out_w {
                        let (x0, x1) = adaptive_bin(bx, out_w, w);
                        let mut acc = T::zero();
                        for y in y0..y1 {
                            for xx in x0..x1 {
                                acc += plane[y * w + xx];
                            }
                        }
                        out.push(acc / T::from_usize((y1 - y0) * (x1 - x0)).unwrap());
                    }
                }
            }
            Tensor::new(vec![n, c, out_h, out_w], out)
        }
        Pool::ChannelMax | Pool::ChannelAvg => {
            let mut out = Vec::with_capacity(n * hw);
            let inv = T::one() / T::from_usize(c).unwrap();
            for sample in src.chunks(c * hw) {
                for p in 0..hw {
                    let vals = (0..c).map(|ch| sample[ch * hw + p]);
                    out.push(if kind == Pool::ChannelMax {
                        vals.fold(T::neg_infinity(), T::max)
                    } else {
                        vals.sum::<T>() * inv
                    });
                }
            }
            Tensor::new(vec![n, 1, h, w], out)
        }
    }
}

fn pool_backward<T: Scalar>(inp: &Tensor<T>, kind: Pool, g: &[T], gx: &mut [T]) {
    let [_, c, h, w] = inp.dims4("pool").unwrap();
    let hw = h * w;
    let src = inp.data();
    match kind {
        Pool::GlobalAvg => {
            let inv = T::one() / T::from_usize(hw).unwrap();
            for (plane, &gi) in gx.chunks_mut(hw).zip(g) {
                plane.iter_mut().for_each(|d| *d += gi * inv);
            }
        }
        Pool::AdaptiveAvg { out_h, out_w } => {
            for (plane, gp) in gx.chunks_mut(hw).zip(g.chunks(out_h * out_w)) {
                for by in 0..out_h {
                    let (y0, y1) = adaptive_bin(by, out_h, h);
                    for bx in 0..out_w {
                        let (x0, x1) = adaptive_bin(bx, out_w, w);
                        let share =
                            gp[by * out_w + bx] / T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                        for y in y0..y1 {
                            for xx in x0..x1 {
                                plane[y * w + xx] += share;
                            }
                        }
                    }
                }
            }
        }
        Pool::ChannelMax => {
            for (s, (sample, gs)) in gx.chunks_mut(c * hw).zip(g.chunks(hw)).enumerate() {
                let base = s * c * hw;
                for p in 0..hw {
                    // first maximal channel wins ties
                    let mut best = 0;
                    for ch in 1..c {
                        if src[base + ch * hw + p] > src[base + best * hw + p] {
                            best = ch;
                        }
                    }
                    sample[best * hw + p] += gs[p];
                }
            }
        }
        Pool::ChannelAvg => {
            let inv = T::one() / T::from_usize(c).unwrap();
            for (sample, gs) in gx.chunks_mut(c * hw).zip(g.chunks(hw)) {
                for ch in 0..c {
                    for p in 0..hw {
                        sample[ch * hw + p] += gs[p] * inv;
                    }
                }
            }
        }
    }
}
