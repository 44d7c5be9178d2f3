//! Pooling, nearest upsampling and channel concatenation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// 2x2 stride-2 max pooling. Returns the pooled tensor and, for every output
/// element, the flat input offset it was taken from. Ties go to the first
/// element in row-major window order.
pub fn maxpool2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let d = x.dims();
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return Err(Error::OddSpatial {
            op: "maxpool2d",
            h: d.h,
            w: d.w,
        });
    }
    let od = d.with_hw(d.h / 2, d.w / 2);
    let xs = x.data();
    let mut out = Vec::with_capacity(od.numel());
    let mut argmax = Vec::with_capacity(od.numel());
    for n in 0..d.n {
        for c in 0..d.c {
            for oy in 0..od.h {
                for ox in 0..od.w {
                    let mut best = d.offset(n, c, 2 * oy, 2 * ox);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = d.offset(n, c, 2 * oy + dy, 2 * ox + dx);
                        if xs[i] > xs[best] {
                            best = i;
                        }
                    }
                    out.push(xs[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((Tensor::new(od, out)?, argmax))
}

pub fn maxpool2_grad<T: Scalar>(dy: &Tensor<T>, argmax: &[usize], x_dims: Dims) -> Tensor<T> {
    let mut dx = Tensor::zeros(x_dims);
    let buf = dx.data_mut();
    for (&src, &g) in argmax.iter().zip(dy.data()) {
        buf[src] = buf[src] + g;
    }
    dx
}

/// Mean over each `h x w` plane, giving `(n, c, 1, 1)`.
pub fn global_avgpool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let inv = T::one() / T::from_f64(d.plane() as f64);
    let data = x
        .data()
        .chunks_exact(d.plane())
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::new(d.with_hw(1, 1), data).expect("avgpool dims")
}

pub fn global_avgpool_grad<T: Scalar>(dy: &Tensor<T>, x_dims: Dims) -> Tensor<T> {
    let inv = T::one() / T::from_f64(x_dims.plane() as f64);
    let mut data = Vec::with_capacity(x_dims.numel());
    for &g in dy.data() {
        data.extend(std::iter::repeat(g * inv).take(x_dims.plane()));
    }
    Tensor::new(x_dims, data).expect("avgpool grad dims")
}

/// Nearest-neighbour x2 upsampling: `out[i, j] = in[i / 2, j / 2]`.
pub fn upsample_nearest2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let od = d.with_hw(2 * d.h, 2 * d.w);
    let mut out = Vec::with_capacity(od.numel());
    for plane in x.data().chunks_exact(d.plane()) {
        for row in plane.chunks_exact(d.w) {
            for _ in 0..2 {
                for &v in row {
                    out.push(v);
                    out.push(v);
                }
            }
        }
    }
    Tensor::new(od, out).expect("upsample dims")
}

/// Adjoint of [`upsample_nearest2`]: each input cell collects its four children.
pub fn upsample_nearest2_grad<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let od = dy.dims();
    let d = od.with_hw(od.h / 2, od.w / 2);
    let mut dx = vec![T::zero(); d.numel()];
    for (p, plane) in dy.data().chunks_exact(od.plane()).enumerate() {
        let dst = &mut dx[p * d.plane()..][..d.plane()];
        for (oy, row) in plane.chunks_exact(od.w).enumerate() {
            for (ox, &g) in row.iter().enumerate() {
                let i = (oy / 2) * d.w + ox / 2;
                dst[i] = dst[i] + g;
            }
        }
    }
    Tensor::new(d, dx).expect("upsample grad dims")
}

/// Concatenates along channels; part 0 occupies the lowest channel indices.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::ShapeMismatch {
        op: "concat_channels",
        detail: "no parts".into(),
    })?;
    let d0 = first.dims();
    for p in parts {
        let d = p.dims();
        if (d.n, d.h, d.w) != (d0.n, d0.h, d0.w) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                detail: format!("{d} vs {d0}"),
            });
        }
    }
    let c: usize = parts.iter().map(|p| p.dims().c).sum();
    let od = d0.with_c(c);
    let mut out = Vec::with_capacity(od.numel());
    for n in 0..d0.n {
        for p in parts {
            let d = p.dims();
            let start = d.offset(n, 0, 0, 0);
            out.extend_from_slice(&p.data()[start..start + d.c * d.plane()]);
        }
    }
    Tensor::new(od, out)
}
