//! Elementwise activations and channel gating.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Logistic function, clamped to the open interval (0, 1) so saturated inputs
/// never produce exactly 0 or 1.
#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    let one = T::one();
    let y = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    let top = one - T::epsilon() / T::from_f64(2.0);
    y.max(T::min_positive_value()).min(top)
}

#[inline]
pub fn silu_scalar<T: Scalar>(x: T) -> T {
    x * sigmoid_scalar(x)
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Gradient of sigmoid given its output `y`.
pub fn sigmoid_grad<T: Scalar>(dy: &Tensor<T>, y: &Tensor<T>) -> Tensor<T> {
    dy.zip_map(y, |g, s| g * s * (T::one() - s)).expect("sigmoid grad dims")
}

pub fn silu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(silu_scalar)
}

pub fn silu_grad<T: Scalar>(dy: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    dy.zip_map(x, |g, v| {
        let s = sigmoid_scalar(v);
        g * (s + v * s * (T::one() - s))
    })
    .expect("silu grad dims")
}

fn check_gate<T: Scalar>(x: &Tensor<T>, gate: &Tensor<T>) -> Result<()> {
    let (xd, gd) = (x.dims(), gate.dims());
    if gd.c != xd.c {
        return Err(Error::ChannelMismatch {
            op: "mul_broadcast",
            expected: xd.c,
            got: gd.c,
        });
    }
    if gd.n != xd.n || gd.h != 1 || gd.w != 1 {
        return Err(Error::ShapeMismatch {
            op: "mul_broadcast",
            detail: format!("gate dims {gd} must be ({},{},1,1)", xd.n, xd.c),
        });
    }
    Ok(())
}

/// Multiplies every spatial location of channel `k` by `gate[k]`.
pub fn mul_broadcast<T: Scalar>(x: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
    check_gate(x, gate)?;
    let plane = x.dims().plane();
    let mut out = x.clone();
    for (chunk, &g) in out.data_mut().chunks_exact_mut(plane).zip(gate.data()) {
        chunk.iter_mut().for_each(|v| *v = *v * g);
    }
    Ok(out)
}

/// Returns `(d x, d gate)` for [`mul_broadcast`].
pub fn mul_broadcast_grad<T: Scalar>(dy: &Tensor<T>, x: &Tensor<T>, gate: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let plane = x.dims().plane();
    let dx = mul_broadcast(dy, gate).expect("checked in forward");
    let dg_data = dy
        .data()
        .chunks_exact(plane)
        .zip(x.data().chunks_exact(plane))
        .map(|(g, v)| g.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>())
        .collect();
    let dg = Tensor::new(gate.dims(), dg_data).expect("gate grad dims");
    (dx, dg)
}
