//! Reverse-mode differentiation tape.
//!
//! Every operation appends one node holding its output value and the
//! information its backward rule needs. Recording order is a topological
//! order, so [`Tape::backward`] replays the nodes in reverse.

use crate::error::{Error, Result};
use crate::harness::head;
use crate::ops::{activation, conv, pool, resize, ConvSpec, PoolSpec};
use crate::tensor::{Element, Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    SliceBatch {
        x: Var,
        start: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        spec: ConvSpec,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Var,
        spec: ConvSpec,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Bilinear(Var),
    SoftArgmin {
        left: Var,
        right: Var,
        max_disp: usize,
        probs: Vec<T>,
    },
    SmoothL1 {
        pred: Var,
        target: Vec<T>,
        mask: Vec<bool>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    param: Option<usize>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).needs_grad)
    }

    /// Records an input tensor. It receives a gradient iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs)
    }

    /// Records a copy of parameter `id`; its gradient is reported by [`Tape::param_grads`].
    pub fn param(&mut self, id: usize, tensor: &Tensor<T>) -> Var {
        let mut value =
            Tensor::from_vec(tensor.shape(), tensor.data().to_vec()).expect("parameter tensor is well formed");
        value.set_requires_grad(true);
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.node(v).value.shape()
    }

    /// Gradient accumulated on a leaf by previous backward passes.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.node(v).value.grad()
    }

    /// Parameter gradients as `(parameter id, gradient)` pairs.
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &[T])> + '_ {
        self.nodes.iter().filter_map(|n| Some((n.param?, n.value.grad()?)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::MergeShape(format!("cannot add {sa} and {sb}")));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::from_vec(sa, data)?, Op::Add(a, b), needs))
    }

    /// Sum of one or more equally shaped tensors, folded left to right.
    pub fn add_all(&mut self, inputs: &[Var]) -> Result<Var> {
        let (&first, rest) = inputs
            .split_first()
            .ok_or_else(|| Error::Contract("add_all needs at least one input".into()))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Contract(format!("cannot multiply {sa} and {sb}")));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::from_vec(sa, data)?, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let data = self.value(x).data().iter().map(|&v| v * factor).collect();
        let value = Tensor::from_vec(self.shape(x), data)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::Scale(x, factor), needs))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().copied().sum::<T>();
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(total), Op::Sum(x), needs))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x);
        let mean = value.data().iter().copied().sum::<T>() / T::of(value.len() as f64);
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(mean), Op::Mean(x), needs))
    }

    /// Stacks inputs along the channel axis in argument order.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Contract("concat needs at least one input".into()))?;
        let s0 = self.shape(first);
        let mut channels = 0;
        for &v in inputs {
            let s = self.shape(v);
            if (s.n, s.h, s.w) != (s0.n, s0.h, s0.w) {
                return Err(Error::MergeShape(format!(
                    "cannot concatenate {s} with {s0}: batch and spatial dims differ"
                )));
            }
            channels += s.c;
        }
        let out_shape = s0.with_channels(channels);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..s0.n {
            for &v in inputs {
                let t = self.value(v);
                let len = t.shape().c * t.shape().plane();
                data.extend_from_slice(&t.data()[n * len..(n + 1) * len]);
            }
        }
        let needs = self.needs(inputs);
        Ok(self.push(Tensor::from_vec(out_shape, data)?, Op::Concat(inputs.to_vec()), needs))
    }

    /// Batch entries `start..start + len`.
    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if len == 0 || start + len > s.n {
            return Err(Error::InvalidShape(format!(
                "batch slice {start}..{} out of range for {s}",
                start + len
            )));
        }
        let item = s.c * s.plane();
        let data = self.value(x).data()[start * item..(start + len) * item].to_vec();
        let value = Tensor::from_vec(Shape { n: len, ..s }, data)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::SliceBatch { x, start }, needs))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        let value = conv::conv2d_forward(self.value(x), self.value(w), self.value(b), &spec)?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(value, Op::Conv2d { x, w, b, spec }, needs))
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        let value = conv::conv_transpose2d_forward(self.value(x), self.value(w), self.value(b), &spec)?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, spec }, needs))
    }

    pub fn max_pool2d(&mut self, x: Var, spec: PoolSpec) -> Result<Var> {
        let (value, argmax) = pool::max_pool2d_forward(self.value(x), &spec)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::MaxPool { x, argmax }, needs))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        let data = activation::leaky_relu_forward(self.value(x).data(), slope);
        let value = Tensor::from_vec(self.shape(x), data)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::LeakyRelu { x, slope }, needs))
    }

    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let value = resize::bilinear_forward(self.value(x), out_h, out_w)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::Bilinear(x), needs))
    }

    /// Soft-argmin disparity over candidates `0..=max_disp`; see [`crate::harness::head`].
    pub fn soft_argmin_disparity(&mut self, left: Var, right: Var, max_disp: usize) -> Result<Var> {
        let (value, probs) = head::soft_argmin_forward(self.value(left), self.value(right), max_disp)?;
        let needs = self.needs(&[left, right]);
        Ok(self.push(
            value,
            Op::SoftArgmin {
                left,
                right,
                max_disp,
                probs,
            },
            needs,
        ))
    }

    /// Mean smooth-L1 (Huber, delta 1) distance to `target` over `mask`.
    pub fn smooth_l1(&mut self, pred: Var, target: Vec<T>, mask: Vec<bool>) -> Result<Var> {
        let (loss, count) = head::smooth_l1_forward(self.value(pred).data(), &target, &mask)?;
        let needs = self.needs(&[pred]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SmoothL1 {
                pred,
                target,
                mask,
                count,
            },
            needs,
        ))
    }

    /// Back-propagates from a scalar `loss`, accumulating (`+=`) into every
    /// leaf that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let loss_shape = self.shape(loss);
        if loss_shape != Shape::scalar() {
            return Err(Error::Contract(format!(
                "backward needs a (1,1,1,1) loss, got {loss_shape}"
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            for (input, dg) in self.backward_node(i, &g)? {
                accumulate(&mut grads, input, dg);
            }
        }
        Ok(())
    }

    /// Input gradients of node `i` given its output gradient.
    fn backward_node(&self, i: usize, g: &[T]) -> Result<Vec<(Var, Vec<T>)>> {
        let node = &self.nodes[i];
        let wants = |v: Var| self.node(v).needs_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for &v in [a, b] {
                    if wants(v) {
                        out.push((v, g.to_vec()));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if wants(*a) {
                    out.push((*a, g.iter().zip(vb).map(|(&g, &y)| g * y).collect()));
                }
                if wants(*b) {
                    out.push((*b, g.iter().zip(va).map(|(&g, &x)| g * x).collect()));
                }
            }
            Op::Scale(x, factor) => {
                out.push((*x, g.iter().map(|&v| v * *factor).collect()));
            }
            Op::Sum(x) => {
                out.push((*x, vec![g[0]; self.value(*x).len()]));
            }
            Op::Mean(x) => {
                let len = self.value(*x).len();
                out.push((*x, vec![g[0] / T::of(len as f64); len]));
            }
            Op::Concat(inputs) => {
                let s = node.value.shape();
                let mut parts: Vec<Vec<T>> = inputs
                    .iter()
                    .map(|&v| Vec::with_capacity(self.value(v).len()))
                    .collect();
                let mut offset = 0;
                for n in 0..s.n {
                    debug_assert_eq!(offset, n * s.c * s.plane());
                    for (part, &v) in parts.iter_mut().zip(inputs) {
                        let len = self.shape(v).c * s.plane();
                        part.extend_from_slice(&g[offset..offset + len]);
                        offset += len;
                    }
                }
                for (part, &v) in parts.into_iter().zip(inputs) {
                    if wants(v) {
                        out.push((v, part));
                    }
                }
            }
            Op::SliceBatch { x, start } => {
                let src = self.value(*x);
                let item = src.shape().c * src.shape().plane();
                let mut dx = vec![T::zero(); src.len()];
                dx[start * item..start * item + g.len()].copy_from_slice(g);
                out.push((*x, dx));
            }
            Op::Conv2d { x, w, b, spec } => {
                let (dx, dw, db) = conv::conv2d_backward(self.value(*x), self.value(*w), spec, g, wants(*x))?;
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                if wants(*w) {
                    out.push((*w, dw));
                }
                if wants(*b) {
                    out.push((*b, db));
                }
            }
            Op::ConvTranspose2d { x, w, b, spec } => {
                let (dx, dw, db) = conv::conv_transpose2d_backward(self.value(*x), self.value(*w), spec, g, wants(*x))?;
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                if wants(*w) {
                    out.push((*w, dw));
                }
                if wants(*b) {
                    out.push((*b, db));
                }
            }
            Op::MaxPool { x, argmax } => {
                out.push((*x, pool::max_pool2d_backward(self.value(*x).len(), argmax, g)));
            }
            Op::LeakyRelu { x, slope } => {
                out.push((*x, activation::leaky_relu_backward(self.value(*x).data(), *slope, g)));
            }
            Op::Bilinear(x) => {
                let s = node.value.shape();
                out.push((*x, resize::bilinear_backward(self.shape(*x), s.h, s.w, g)));
            }
            Op::SoftArgmin {
                left,
                right,
                max_disp,
                probs,
            } => {
                let (dl, dr) = head::soft_argmin_backward(
                    self.value(*left),
                    self.value(*right),
                    *max_disp,
                    probs,
                    node.value.data(),
                    g,
                );
                if wants(*left) {
                    out.push((*left, dl));
                }
                if wants(*right) {
                    out.push((*right, dr));
                }
            }
            Op::SmoothL1 {
                pred,
                target,
                mask,
                count,
            } => {
                out.push((
                    *pred,
                    head::smooth_l1_backward(self.value(*pred).data(), target, mask, *count, g[0]),
                ));
            }
        }
        Ok(out.into_iter().filter(|(v, _)| wants(*v)).collect())
    }
}

fn accumulate<T: Element>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}
