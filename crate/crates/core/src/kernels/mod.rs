//! Primitive tensor kernels. Each forward kernel has matching adjoint
//! functions used by [`crate::autodiff::Graph`].
//!
//! The functions re-exported at this level operate on whole tensors and
//! mirror the layer-level contracts (for example [`conv2d`] applies the
//! activation named in its [`ConvSpec`]).

pub mod conv;
pub mod pointwise;
pub mod pool;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layers::{Activation, ConvSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use conv::Geometry;
pub use pointwise::{mul_broadcast, sigmoid, silu};
pub use pool::{concat_channels, global_avgpool, upsample_nearest2 as upsample_nearest};

/// Below this many multiply-adds a kernel stays on the calling thread.
const PARALLEL_WORK: usize = 1 << 15;

/// Runs `f(index, chunk)` over consecutive `chunk`-sized pieces of `buf`,
/// in parallel when the total `work` is large enough. Every chunk is
/// computed the same way regardless of threading, so results are
/// bitwise-identical either way.
pub(crate) fn for_each_plane<T, F>(buf: &mut [T], chunk: usize, work: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if work >= PARALLEL_WORK && buf.len() > chunk {
        buf.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        buf.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

pub fn activate<T: Scalar>(x: &Tensor<T>, act: Activation) -> Tensor<T> {
    match act {
        Activation::Identity => x.clone(),
        Activation::Sigmoid => sigmoid(x),
        Activation::Silu => silu(x),
    }
}

/// Convolution described by `spec`, followed by its activation.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    spec.check_weights(weights.dims(), bias.map(Tensor::dims))?;
    if x.dims().c != spec.in_channels {
        return Err(Error::ChannelMismatch {
            op: "conv2d",
            expected: spec.in_channels,
            got: x.dims().c,
        });
    }
    let y = conv::conv2d(x, weights, bias, spec.geometry())?;
    Ok(activate(&y, spec.activation))
}

/// Transposed convolution with a square `kernel`; weights are `(in, out, k, k)`.
pub fn conv_transpose2d<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    kernel: usize,
) -> Result<Tensor<T>> {
    if weights.dims().h != kernel || weights.dims().w != kernel {
        return Err(Error::ShapeMismatch {
            op: "conv_transpose2d",
            detail: format!("weights {} do not have kernel {kernel}", weights.dims()),
        });
    }
    conv::conv_transpose2d(x, weights, bias, stride)
}

pub fn maxpool2d<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    pool::maxpool2(x).map(|(y, _)| y)
}
