//! Direct-loop convolution and transposed convolution, forward and adjoints.
//!
//! Weight layouts follow the usual conventions: `(out, in, kh, kw)` for
//! convolution and `(in, out, k, k)` for transposed convolution. Convolution
//! is cross-correlation (no kernel flip).

use std::ops::Range;

use crate::error::{Error, Result};
use crate::kernels::for_each_plane;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Geometry {
    pub const UNIT: Geometry = Geometry {
        stride: 1,
        padding: 0,
        dilation: 1,
    };

    /// `floor((len + 2p - d(k-1) - 1) / s) + 1`, or `None` when the dilated
    /// kernel does not fit the padded input.
    pub fn out_len(&self, len: usize, k: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        let extent = self.dilation * (k - 1) + 1;
        (padded >= extent).then(|| (padded - extent) / self.stride + 1)
    }
}

/// Output positions `o` in `0..out_len` for which `o*stride + offset` lands in
/// `0..in_len`.
#[inline]
fn tap_range(offset: isize, stride: usize, in_len: usize, out_len: usize) -> Range<usize> {
    let s = stride as isize;
    let lo = if offset < 0 {
        ((-offset + s - 1) / s).min(out_len as isize)
    } else {
        0
    };
    let last_in = in_len as isize - 1 - offset;
    if last_in < 0 {
        return 0..0;
    }
    let hi = (last_in / s + 1).min(out_len as isize);
    (lo as usize)..(hi.max(lo) as usize)
}

fn check_conv(x: Dims, w: Dims, bias: Option<Dims>, g: Geometry) -> Result<Dims> {
    if g.stride == 0 || g.dilation == 0 {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            detail: format!("stride and dilation must be >= 1, got {g:?}"),
        });
    }
    if x.c != w.c {
        return Err(Error::ChannelMismatch {
            op: "conv2d",
            expected: w.c,
            got: x.c,
        });
    }
    if let Some(b) = bias {
        if b != Dims::new(1, w.n, 1, 1) {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("bias dims {b}, expected (1,{},1,1)", w.n),
            });
        }
    }
    match (g.out_len(x.h, w.h), g.out_len(x.w, w.w)) {
        (Some(ho), Some(wo)) => Ok(Dims::new(x.n, w.n, ho, wo)),
        _ => Err(Error::NonPositiveOutput {
            op: "conv2d",
            h: x.h,
            w: x.w,
        }),
    }
}

/// Output dims of a convolution, validating channels and extents.
pub fn conv2d_out_dims(x: Dims, w: Dims, g: Geometry) -> Result<Dims> {
    check_conv(x, w, None, g)
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&Tensor<T>>, g: Geometry) -> Result<Tensor<T>> {
    let xd = x.dims();
    let wd = w.dims();
    let od = check_conv(xd, wd, bias.map(Tensor::dims), g)?;
    let (kh, kw) = (wd.h, wd.w);
    let (xs, ws) = (x.data(), w.data());
    let mut out = vec![T::zero(); od.numel()];
    let work = od.numel() * wd.c * kh * kw;
    for_each_plane(&mut out, od.plane(), work, |idx, plane| {
        let (n, oc) = (idx / od.c, idx % od.c);
        if let Some(b) = bias {
            plane.fill(b.data()[oc]);
        }
        for ic in 0..wd.c {
            let xin = &xs[xd.offset(n, ic, 0, 0)..][..xd.plane()];
            for ky in 0..kh {
                let off_y = (ky * g.dilation) as isize - g.padding as isize;
                let rows = tap_range(off_y, g.stride, xd.h, od.h);
                for kx in 0..kw {
                    let wv = ws[wd.offset(oc, ic, ky, kx)];
                    let off_x = (kx * g.dilation) as isize - g.padding as isize;
                    let cols = tap_range(off_x, g.stride, xd.w, od.w);
                    if cols.is_empty() {
                        continue;
                    }
                    for oy in rows.clone() {
                        let iy = (oy * g.stride) as isize + off_y;
                        let row = &xin[iy as usize * xd.w..][..xd.w];
                        let orow = &mut plane[oy * od.w..][..od.w];
                        let ix0 = (cols.start * g.stride) as isize + off_x;
                        let mut ix = ix0 as usize;
                        for o in &mut orow[cols.clone()] {
                            *o = *o + wv * row[ix];
                            ix += g.stride;
                        }
                    }
                }
            }
        }
    });
    Tensor::new(od, out)
}

/// Gradient of [`conv2d`] with respect to its input.
pub fn conv2d_grad_input<T: Scalar>(dy: &Tensor<T>, w: &Tensor<T>, x_dims: Dims, g: Geometry) -> Result<Tensor<T>> {
    let wd = w.dims();
    let od = check_conv(x_dims, wd, None, g)?;
    if dy.dims() != od {
        return Err(Error::ShapeMismatch {
            op: "conv2d_grad_input",
            detail: format!("upstream {} vs output {od}", dy.dims()),
        });
    }
    let xd = x_dims;
    let (dys, ws) = (dy.data(), w.data());
    let mut dx = vec![T::zero(); xd.numel()];
    let work = od.numel() * wd.c * wd.h * wd.w;
    for_each_plane(&mut dx, xd.plane(), work, |idx, plane| {
        let (n, ic) = (idx / xd.c, idx % xd.c);
        for oc in 0..wd.n {
            let dplane = &dys[od.offset(n, oc, 0, 0)..][..od.plane()];
            for ky in 0..wd.h {
                let off_y = (ky * g.dilation) as isize - g.padding as isize;
                let rows = tap_range(off_y, g.stride, xd.h, od.h);
                for kx in 0..wd.w {
                    let wv = ws[wd.offset(oc, ic, ky, kx)];
                    let off_x = (kx * g.dilation) as isize - g.padding as isize;
                    let cols = tap_range(off_x, g.stride, xd.w, od.w);
                    for oy in rows.clone() {
                        let iy = ((oy * g.stride) as isize + off_y) as usize;
                        let drow = &dplane[oy * od.w..][..od.w];
                        let xrow = &mut plane[iy * xd.w..][..xd.w];
                        let mut ix = ((cols.start * g.stride) as isize + off_x) as usize;
                        for &d in &drow[cols.clone()] {
                            xrow[ix] = xrow[ix] + wv * d;
                            ix += g.stride;
                        }
                    }
                }
            }
        }
    });
    Tensor::new(xd, dx)
}

/// Gradient of [`conv2d`] with respect to its weights.
pub fn conv2d_grad_weight<T: Scalar>(dy: &Tensor<T>, x: &Tensor<T>, w_dims: Dims, g: Geometry) -> Result<Tensor<T>> {
    let xd = x.dims();
    let wd = w_dims;
    let od = check_conv(xd, wd, None, g)?;
    let (dys, xs) = (dy.data(), x.data());
    let mut dw = vec![T::zero(); wd.numel()];
    let per_oc = wd.c * wd.h * wd.w;
    let work = od.numel() * per_oc;
    for_each_plane(&mut dw, per_oc, work, |oc, chunk| {
        for ic in 0..wd.c {
            for ky in 0..wd.h {
                let off_y = (ky * g.dilation) as isize - g.padding as isize;
                let rows = tap_range(off_y, g.stride, xd.h, od.h);
                for kx in 0..wd.w {
                    let off_x = (kx * g.dilation) as isize - g.padding as isize;
                    let cols = tap_range(off_x, g.stride, xd.w, od.w);
                    let mut acc = T::zero();
                    for n in 0..xd.n {
                        let dplane = &dys[od.offset(n, oc, 0, 0)..][..od.plane()];
                        let xplane = &xs[xd.offset(n, ic, 0, 0)..][..xd.plane()];
                        for oy in rows.clone() {
                            let iy = ((oy * g.stride) as isize + off_y) as usize;
                            let drow = &dplane[oy * od.w..][..od.w];
                            let xrow = &xplane[iy * xd.w..][..xd.w];
                            let mut ix = ((cols.start * g.stride) as isize + off_x) as usize;
                            for &d in &drow[cols.clone()] {
                                acc = acc + d * xrow[ix];
                                ix += g.stride;
                            }
                        }
                    }
                    chunk[(ic * wd.h + ky) * wd.w + kx] = acc;
                }
            }
        }
    });
    Tensor::new(wd, dw)
}

/// Per-channel sum of the upstream gradient, shaped like a bias `(1,C,1,1)`.
pub fn bias_grad<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let d = dy.dims();
    let mut out = vec![T::zero(); d.c];
    for n in 0..d.n {
        for (c, o) in out.iter_mut().enumerate() {
            let plane = &dy.data()[d.offset(n, c, 0, 0)..][..d.plane()];
            *o = *o + plane.iter().copied().sum::<T>();
        }
    }
    Tensor::new([1, d.c, 1, 1], out).expect("bias grad dims")
}

fn check_transpose(x: Dims, w: Dims, bias: Option<Dims>, stride: usize) -> Result<Dims> {
    if x.c != w.n {
        return Err(Error::ChannelMismatch {
            op: "conv_transpose2d",
            expected: w.n,
            got: x.c,
        });
    }
    if w.h != w.w || stride == 0 {
        return Err(Error::ShapeMismatch {
            op: "conv_transpose2d",
            detail: format!("square kernel and stride >= 1 required, weights {w}, stride {stride}"),
        });
    }
    if let Some(b) = bias {
        if b != Dims::new(1, w.c, 1, 1) {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose2d",
                detail: format!("bias dims {b}, expected (1,{},1,1)", w.c),
            });
        }
    }
    let k = w.h;
    Ok(Dims::new(x.n, w.c, (x.h - 1) * stride + k, (x.w - 1) * stride + k))
}

pub fn conv_transpose2d_out_dims(x: Dims, w: Dims, stride: usize) -> Result<Dims> {
    check_transpose(x, w, None, stride)
}

pub fn conv_transpose2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (xd, wd) = (x.dims(), w.dims());
    let od = check_transpose(xd, wd, bias.map(Tensor::dims), stride)?;
    let k = wd.h;
    let (xs, ws) = (x.data(), w.data());
    let mut out = vec![T::zero(); od.numel()];
    let work = xd.numel() * wd.c * k * k;
    for_each_plane(&mut out, od.plane(), work, |idx, plane| {
        let (n, oc) = (idx / od.c, idx % od.c);
        if let Some(b) = bias {
            plane.fill(b.data()[oc]);
        }
        for ic in 0..xd.c {
            let xin = &xs[xd.offset(n, ic, 0, 0)..][..xd.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = ws[wd.offset(ic, oc, ky, kx)];
                    for iy in 0..xd.h {
                        let orow = &mut plane[(iy * stride + ky) * od.w..][..od.w];
                        for (ix, &xv) in xin[iy * xd.w..][..xd.w].iter().enumerate() {
                            let o = &mut orow[ix * stride + kx];
                            *o = *o + wv * xv;
                        }
                    }
                }
            }
        }
    });
    Tensor::new(od, out)
}

pub fn conv_transpose2d_grad_input<T: Scalar>(
    dy: &Tensor<T>,
    w: &Tensor<T>,
    x_dims: Dims,
    stride: usize,
) -> Result<Tensor<T>> {
    let wd = w.dims();
    let od = check_transpose(x_dims, wd, None, stride)?;
    let xd = x_dims;
    let k = wd.h;
    let (dys, ws) = (dy.data(), w.data());
    let mut dx = vec![T::zero(); xd.numel()];
    let work = xd.numel() * wd.c * k * k;
    for_each_plane(&mut dx, xd.plane(), work, |idx, plane| {
        let (n, ic) = (idx / xd.c, idx % xd.c);
        for oc in 0..wd.c {
            let dplane = &dys[od.offset(n, oc, 0, 0)..][..od.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = ws[wd.offset(ic, oc, ky, kx)];
                    for iy in 0..xd.h {
                        let drow = &dplane[(iy * stride + ky) * od.w..][..od.w];
                        for (ix, v) in plane[iy * xd.w..][..xd.w].iter_mut().enumerate() {
                            *v = *v + wv * drow[ix * stride + kx];
                        }
                    }
                }
            }
        }
    });
    Tensor::new(xd, dx)
}

pub fn conv_transpose2d_grad_weight<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    w_dims: Dims,
    stride: usize,
) -> Result<Tensor<T>> {
    let xd = x.dims();
    let wd = w_dims;
    let od = check_transpose(xd, wd, None, stride)?;
    let k = wd.h;
    let (dys, xs) = (dy.data(), x.data());
    let mut dw = vec![T::zero(); wd.numel()];
    let per_ic = wd.c * k * k;
    let work = xd.numel() * per_ic;
    for_each_plane(&mut dw, per_ic, work, |ic, chunk| {
        for oc in 0..wd.c {
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = T::zero();
                    for n in 0..xd.n {
                        let xplane = &xs[xd.offset(n, ic, 0, 0)..][..xd.plane()];
                        let dplane = &dys[od.offset(n, oc, 0, 0)..][..od.plane()];
                        for iy in 0..xd.h {
                            let drow = &dplane[(iy * stride + ky) * od.w..][..od.w];
                            for (ix, &xv) in xplane[iy * xd.w..][..xd.w].iter().enumerate() {
                                acc = acc + xv * drow[ix * stride + kx];
                            }
                        }
                    }
                    chunk[(oc * k + ky) * k + kx] = acc;
                }
            }
        }
    });
    Tensor::new(wd, dw)
}
