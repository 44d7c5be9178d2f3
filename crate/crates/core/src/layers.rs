//! Parameterised convolution layers and the traits shared by every block.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::Geometry;
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Silu,
}

/// Shape and behaviour of one convolution: conv, optional bias, activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub bias: bool,
    pub activation: Activation,
}

impl ConvSpec {
    /// Square `k x k` conv, stride 1, "same" padding for odd `k`, bias, SiLU.
    pub fn new(in_channels: usize, out_channels: usize, k: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride: 1,
            padding: k / 2,
            dilation: 1,
            bias: true,
            activation: Activation::Silu,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            stride: self.stride,
            padding: self.padding,
            dilation: self.dilation,
        }
    }

    pub fn weight_dims(&self) -> Dims {
        Dims::new(self.out_channels, self.in_channels, self.kernel.0, self.kernel.1)
    }

    pub fn bias_dims(&self) -> Dims {
        Dims::new(1, self.out_channels, 1, 1)
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    /// `out * in * kh * kw (+ out)`.
    pub fn param_count(&self) -> u64 {
        let w = self.weight_dims().numel() as u64;
        if self.bias {
            w + self.out_channels as u64
        } else {
            w
        }
    }

    pub fn output_dims(&self, x: Dims) -> Result<Dims> {
        if x.c != self.in_channels {
            return Err(Error::ChannelMismatch {
                op: "conv2d",
                expected: self.in_channels,
                got: x.c,
            });
        }
        let g = self.geometry();
        match (g.out_len(x.h, self.kernel.0), g.out_len(x.w, self.kernel.1)) {
            (Some(h), Some(w)) => Ok(Dims::new(x.n, self.out_channels, h, w)),
            _ => Err(Error::NonPositiveOutput {
                op: "conv2d",
                h: x.h,
                w: x.w,
            }),
        }
    }

    /// Convolution FLOPs (`2 * out * in * kh * kw * h_out * w_out`) plus one
    /// per output element for a non-identity activation.
    pub fn flops(&self, x: Dims) -> Result<(Dims, u64)> {
        let out = self.output_dims(x)?;
        let mut f = 2 * self.fan_in() as u64 * out.numel() as u64;
        if self.activation != Activation::Identity {
            f += out.numel() as u64;
        }
        Ok((out, f))
    }

    pub fn check_weights(&self, w: Dims, bias: Option<Dims>) -> Result<()> {
        if w != self.weight_dims() {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("weights {w}, spec expects {}", self.weight_dims()),
            });
        }
        match (self.bias, bias) {
            (true, Some(b)) if b == self.bias_dims() => Ok(()),
            (false, None) => Ok(()),
            _ => Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("bias {bias:?} does not match spec (bias = {})", self.bias),
            }),
        }
    }
}

/// Visits named parameter tensors in a fixed order.
pub trait Parameters<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>));

    fn param_count(&self) -> u64 {
        let mut n = 0u64;
        self.visit(&mut |_, t| n += t.numel() as u64);
        n
    }

    fn named_params(&self) -> Vec<(String, Tensor<T>)>
    where
        T: Clone,
    {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_owned(), t.clone())));
        out
    }
}

/// A single-input, single-output block that can be recorded on a graph.
pub trait Block<T: Scalar>: Parameters<T> {
    fn name(&self) -> &str;
    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var>;

    /// Output dims and FLOPs for an input of `x` dims, without running it.
    fn cost(&self, x: Dims) -> Result<(Dims, u64)>;

    fn run(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let y = self.forward(&mut g, v)?;
        Ok(g.value(y).clone())
    }
}

fn init_uniform<T: Scalar>(rng: &SeedStream, name: &str, dims: Dims, fan_in: usize) -> Tensor<T> {
    let s = 1.0 / (fan_in as f64).sqrt();
    rng.uniform(name, dims, -s, s)
}

/// A convolution layer with its parameters.
#[derive(Debug, Clone)]
pub struct Conv<T> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    weight_name: String,
    bias_name: String,
}

impl<T: Scalar> Conv<T> {
    /// Weights and bias uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, drawn
    /// from the streams `"{name}.weight"` and `"{name}.bias"`.
    pub fn init(name: &str, spec: ConvSpec, rng: &SeedStream) -> Self {
        let weight_name = format!("{name}.weight");
        let bias_name = format!("{name}.bias");
        let weight = init_uniform(rng, &weight_name, spec.weight_dims(), spec.fan_in());
        let bias = spec
            .bias
            .then(|| init_uniform(rng, &bias_name, spec.bias_dims(), spec.fan_in()));
        Conv {
            spec,
            weight,
            bias,
            weight_name,
            bias_name,
        }
    }

    pub fn from_parts(name: &str, spec: ConvSpec, weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        spec.check_weights(weight.dims(), bias.as_ref().map(Tensor::dims))?;
        Ok(Conv {
            spec,
            weight,
            bias,
            weight_name: format!("{name}.weight"),
            bias_name: format!("{name}.bias"),
        })
    }

    pub fn name(&self) -> &str {
        self.weight_name.trim_end_matches(".weight")
    }

    pub fn zero(&mut self) {
        self.weight.data_mut().fill(T::zero());
        if let Some(b) = &mut self.bias {
            b.data_mut().fill(T::zero());
        }
    }

    /// Sets the kernel centre tap to the identity over channels and zeros the
    /// rest. Requires equal in/out channels.
    pub fn set_identity_center(&mut self) {
        assert_eq!(self.spec.in_channels, self.spec.out_channels);
        self.zero();
        let (kh, kw) = self.spec.kernel;
        let d = self.weight.dims();
        for c in 0..self.spec.out_channels {
            let i = d.offset(c, c, kh / 2, kw / 2);
            self.weight.data_mut()[i] = T::one();
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight_name, &self.weight);
        let b = self.bias.as_ref().map(|b| g.param(&self.bias_name, b));
        let y = g.conv2d(x, w, b, self.spec.geometry())?;
        g.activation(y, self.spec.activation)
    }
}

impl<T: Scalar> Parameters<T> for Conv<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&self.weight_name, &self.weight);
        if let Some(b) = &self.bias {
            f(&self.bias_name, b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f(&self.weight_name, &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&self.bias_name, b);
        }
    }
}

impl<T: Scalar> Block<T> for Conv<T> {
    fn name(&self) -> &str {
        Conv::name(self)
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        Conv::forward(self, g, x)
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        self.spec.flops(x)
    }
}

/// Transposed convolution with a square kernel, bias and no activation.
#[derive(Debug, Clone)]
pub struct ConvTranspose<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    weight_name: String,
    bias_name: String,
}

impl<T: Scalar> ConvTranspose<T> {
    pub fn init(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &SeedStream,
    ) -> Self {
        let weight_name = format!("{name}.weight");
        let bias_name = format!("{name}.bias");
        let fan_in = in_channels * kernel * kernel;
        ConvTranspose {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: init_uniform(
                rng,
                &weight_name,
                Dims::new(in_channels, out_channels, kernel, kernel),
                fan_in,
            ),
            bias: init_uniform(rng, &bias_name, Dims::new(1, out_channels, 1, 1), fan_in),
            weight_name,
            bias_name,
        }
    }

    pub fn output_dims(&self, x: Dims) -> Result<Dims> {
        if x.c != self.in_channels {
            return Err(Error::ChannelMismatch {
                op: "conv_transpose2d",
                expected: self.in_channels,
                got: x.c,
            });
        }
        Ok(Dims::new(
            x.n,
            self.out_channels,
            (x.h - 1) * self.stride + self.kernel,
            (x.w - 1) * self.stride + self.kernel,
        ))
    }

    /// `2 * in * out * k * k` per input pixel.
    pub fn flops(&self, x: Dims) -> Result<(Dims, u64)> {
        let out = self.output_dims(x)?;
        let per_px = (self.in_channels * self.out_channels * self.kernel * self.kernel) as u64;
        Ok((out, 2 * per_px * (x.n * x.h * x.w) as u64))
    }

    pub fn zero(&mut self) {
        self.weight.data_mut().fill(T::zero());
        self.bias.data_mut().fill(T::zero());
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight_name, &self.weight);
        let b = g.param(&self.bias_name, &self.bias);
        g.conv_transpose2d(x, w, Some(b), self.stride)
    }
}

impl<T: Scalar> Parameters<T> for ConvTranspose<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&self.weight_name, &self.weight);
        f(&self.bias_name, &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f(&self.weight_name, &mut self.weight);
        f(&self.bias_name, &mut self.bias);
    }
}
