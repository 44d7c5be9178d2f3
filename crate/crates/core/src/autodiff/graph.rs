use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernels::conv::{self, Geometry};
use crate::kernels::{pointwise, pool};
use crate::layers::Activation;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv2d,
    ConvTranspose2d,
    MaxPool2,
    GlobalAvgPool,
    UpsampleNearest2,
    Concat,
    Sigmoid,
    Silu,
    MulBroadcast,
    Sum,
    WeightedSum,
}

impl std::str::FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "conv2d" => OpKind::Conv2d,
            "conv_transpose2d" => OpKind::ConvTranspose2d,
            "maxpool2d" => OpKind::MaxPool2,
            "global_avgpool" => OpKind::GlobalAvgPool,
            "upsample_nearest" => OpKind::UpsampleNearest2,
            "concat" => OpKind::Concat,
            "sigmoid" => OpKind::Sigmoid,
            "silu" => OpKind::Silu,
            "mul_broadcast" => OpKind::MulBroadcast,
            other => return Err(format!("unknown op `{other}`")),
        })
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geometry: Geometry,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        x: Var,
    },
    UpsampleNearest2 {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Sigmoid {
        x: Var,
    },
    Silu {
        x: Var,
    },
    MulBroadcast {
        x: Var,
        gate: Var,
    },
    Sum {
        x: Var,
    },
    WeightedSum {
        x: Var,
        weights: Tensor<T>,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::MaxPool2 { .. } => OpKind::MaxPool2,
            Op::GlobalAvgPool { .. } => OpKind::GlobalAvgPool,
            Op::UpsampleNearest2 { .. } => OpKind::UpsampleNearest2,
            Op::Concat { .. } => OpKind::Concat,
            Op::Sigmoid { .. } => OpKind::Sigmoid,
            Op::Silu { .. } => OpKind::Silu,
            Op::MulBroadcast { .. } => OpKind::MulBroadcast,
            Op::Sum { .. } => OpKind::Sum,
            Op::WeightedSum { .. } => OpKind::WeightedSum,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// A tape of recorded tensor operations.
///
/// Values are appended in execution order, so every op's inputs precede it.
/// A graph is single-writer; build a fresh one per forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
    fault: Option<OpKind>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Makes backward through every op of `kind` scale its input gradients by
    /// 1.5. Only used to prove that gradient checks catch broken adjoints.
    pub fn inject_backward_fault(&mut self, kind: Option<OpKind>) {
        self.fault = kind;
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownVar(v.0))
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor<T>> {
        self.check(v)?;
        Ok(self.value(v))
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf for a named parameter. Repeated names resolve to the same value,
    /// and names pre-bound with [`Graph::bind_param`] resolve to the bound var.
    pub fn param(&mut self, name: &str, value: &Tensor<T>) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.input(value.clone());
        self.params.insert(name.to_owned(), v);
        v
    }

    pub fn bind_param(&mut self, name: &str, v: Var) {
        self.params.insert(name.to_owned(), v);
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geometry: Geometry) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        if let Some(b) = b {
            self.check(b)?;
        }
        let y = conv::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), geometry)?;
        Ok(self.push(y, Op::Conv2d { x, w, b, geometry }))
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        if let Some(b) = b {
            self.check(b)?;
        }
        let y = conv::conv_transpose2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride)?;
        Ok(self.push(y, Op::ConvTranspose2d { x, w, b, stride }))
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let (y, argmax) = pool::maxpool2(self.value(x))?;
        Ok(self.push(y, Op::MaxPool2 { x, argmax }))
    }

    pub fn global_avgpool(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = pool::global_avgpool(self.value(x));
        Ok(self.push(y, Op::GlobalAvgPool { x }))
    }

    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = pool::upsample_nearest2(self.value(x));
        Ok(self.push(y, Op::UpsampleNearest2 { x }))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let y = pool::concat_channels(&values)?;
        Ok(self.push(y, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = pointwise::sigmoid(self.value(x));
        Ok(self.push(y, Op::Sigmoid { x }))
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = pointwise::silu(self.value(x));
        Ok(self.push(y, Op::Silu { x }))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Result<Var> {
        match act {
            Activation::Identity => {
                self.check(x)?;
                Ok(x)
            }
            Activation::Sigmoid => self.sigmoid(x),
            Activation::Silu => self.silu(x),
        }
    }

    pub fn mul_broadcast(&mut self, x: Var, gate: Var) -> Result<Var> {
        self.check(x)?;
        self.check(gate)?;
        let y = pointwise::mul_broadcast(self.value(x), self.value(gate))?;
        Ok(self.push(y, Op::MulBroadcast { x, gate }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = compensated_sum(self.value(x).data().iter().copied());
        Ok(self.push(Tensor::scalar(s), Op::Sum { x }))
    }

    /// `sum(x * weights)` as a scalar, with compensated accumulation.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.dims() != weights.dims() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                detail: format!("{} vs {}", xv.dims(), weights.dims()),
            });
        }
        let s = compensated_sum(xv.data().iter().zip(weights.data()).map(|(&a, &b)| a * b));
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }))
    }

    /// Floating-point operations recorded on the tape, counted with the same
    /// convention as [`crate::analysis`]: one multiply-add is two FLOPs, bias
    /// adds, concatenation and nearest upsampling are free, activations and
    /// gating cost one per output element.
    pub fn flops(&self) -> u64 {
        self.nodes.iter().map(|n| self.node_flops(n)).sum()
    }

    fn node_flops(&self, node: &Node<T>) -> u64 {
        let out = node.value.dims();
        let numel = out.numel() as u64;
        match &node.op {
            Op::Leaf | Op::Concat { .. } | Op::UpsampleNearest2 { .. } => 0,
            Op::Conv2d { w, .. } => {
                let wd = self.value(*w).dims();
                2 * (wd.c * wd.h * wd.w) as u64 * numel
            }
            Op::ConvTranspose2d { x, w, .. } => {
                let wd = self.value(*w).dims();
                2 * (wd.c * wd.h * wd.w) as u64 * self.value(*x).numel() as u64
            }
            Op::MaxPool2 { .. } => 4 * numel,
            Op::GlobalAvgPool { x } => self.value(*x).numel() as u64,
            Op::Sigmoid { .. } | Op::Silu { .. } | Op::MulBroadcast { .. } => numel,
            Op::Sum { x } => self.value(*x).numel() as u64,
            Op::WeightedSum { x, .. } => 2 * self.value(*x).numel() as u64,
        }
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        self.check(output)?;
        let d = self.value(output).dims();
        if d != Dims::scalar() {
            return Err(Error::NotScalar(d));
        }
        self.backward_with_seed(output, Tensor::ones(d))
    }

    /// Reverse pass seeded with an explicit upstream gradient for `output`.
    pub fn backward_with_seed(&self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        self.check(output)?;
        let d = self.value(output).dims();
        if seed.dims() != d {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("seed {} vs output {d}", seed.dims()),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(dy) = upper[0].as_ref() else {
                continue;
            };
            let node = &self.nodes[i];
            let scale = (self.fault == Some(node.op.kind())).then(|| T::from_f64(1.5));
            let mut emit = |v: Var, g: Tensor<T>| {
                let g = match scale {
                    Some(k) => g.scale(k),
                    None => g,
                };
                accumulate(&mut lower[v.0], g);
            };
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d { x, w, b, geometry } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    emit(*x, conv::conv2d_grad_input(dy, wv, xv.dims(), *geometry)?);
                    emit(*w, conv::conv2d_grad_weight(dy, xv, wv.dims(), *geometry)?);
                    if let Some(b) = b {
                        emit(*b, conv::bias_grad(dy));
                    }
                }
                Op::ConvTranspose2d { x, w, b, stride } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    emit(*x, conv::conv_transpose2d_grad_input(dy, wv, xv.dims(), *stride)?);
                    emit(*w, conv::conv_transpose2d_grad_weight(dy, xv, wv.dims(), *stride)?);
                    if let Some(b) = b {
                        emit(*b, conv::bias_grad(dy));
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    emit(*x, pool::maxpool2_grad(dy, argmax, self.value(*x).dims()));
                }
                Op::GlobalAvgPool { x } => {
                    emit(*x, pool::global_avgpool_grad(dy, self.value(*x).dims()));
                }
                Op::UpsampleNearest2 { x } => {
                    emit(*x, pool::upsample_nearest2_grad(dy));
                }
                Op::Concat { parts } => {
                    let mut start = 0;
                    for &p in parts {
                        let c = self.value(p).dims().c;
                        emit(p, dy.slice_channels(start, start + c)?);
                        start += c;
                    }
                }
                Op::Sigmoid { x } => {
                    emit(*x, pointwise::sigmoid_grad(dy, &node.value));
                }
                Op::Silu { x } => {
                    emit(*x, pointwise::silu_grad(dy, self.value(*x)));
                }
                Op::MulBroadcast { x, gate } => {
                    let (dx, dg) = pointwise::mul_broadcast_grad(dy, self.value(*x), self.value(*gate));
                    emit(*x, dx);
                    emit(*gate, dg);
                }
                Op::Sum { x } => {
                    let g = dy.data()[0];
                    emit(*x, Tensor::full(self.value(*x).dims(), g));
                }
                Op::WeightedSum { x, weights } => {
                    let g = dy.data()[0];
                    emit(*x, weights.scale(g));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b;
            }
        }
        None => *slot = Some(g),
    }
}

/// Neumaier summation.
fn compensated_sum<T: Scalar>(values: impl Iterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut c = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c = c + ((sum - t) + v);
        } else {
            c = c + ((v - t) + sum);
        }
        sum = t;
    }
    sum + c
}

/// Gradients from one reverse pass; `None` for values the output does not
/// depend on.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `dims` when the output does not reach it.
    pub fn get_or_zeros(&self, v: Var, dims: Dims) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(dims))
    }
}
