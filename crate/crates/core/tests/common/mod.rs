//! Direct-loop reference implementations, written independently of the
//! library kernels: plain index arithmetic with bounds checks, f64 throughout.

#![allow(dead_code)]

use neck_core::{Dims, SeedStream, Tensor};

pub fn rand(rng: &SeedStream, key: &str, dims: [usize; 4]) -> Tensor<f64> {
    rng.uniform(key, dims, -1.0, 1.0)
}

/// `max |a - b| / max |b|`, i.e. the error relative to the reference scale.
pub fn rel_err(a: &Tensor<f64>, reference: &Tensor<f64>) -> f64 {
    assert_eq!(a.dims(), reference.dims());
    let scale = reference.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .data()
        .iter()
        .zip(reference.data())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn conv2d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: Option<&Tensor<f64>>,
    stride: usize,
    pad: usize,
    dil: usize,
) -> Tensor<f64> {
    let xd = x.dims();
    let wd = w.dims();
    let ho = (xd.h + 2 * pad - dil * (wd.h - 1) - 1) / stride + 1;
    let wo = (xd.w + 2 * pad - dil * (wd.w - 1) - 1) / stride + 1;
    Tensor::from_fn([xd.n, wd.n, ho, wo], |n, oc, oy, ox| {
        let mut acc = b.map_or(0.0, |b| b.at(0, oc, 0, 0));
        for ic in 0..xd.c {
            for ky in 0..wd.h {
                for kx in 0..wd.w {
                    let iy = (oy * stride + ky * dil) as isize - pad as isize;
                    let ix = (ox * stride + kx * dil) as isize - pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < xd.h && (ix as usize) < xd.w {
                        acc += w.at(oc, ic, ky, kx) * x.at(n, ic, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
}

/// Scatter form: every input pixel paints a `k x k` patch of the output.
pub fn conv_transpose2d(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, stride: usize) -> Tensor<f64> {
    let xd = x.dims();
    let wd = w.dims();
    let k = wd.h;
    let od = Dims::new(xd.n, wd.c, (xd.h - 1) * stride + k, (xd.w - 1) * stride + k);
    let mut out = vec![0.0; od.numel()];
    for n in 0..xd.n {
        for oc in 0..od.c {
            let bias = b.map_or(0.0, |b| b.at(0, oc, 0, 0));
            for y in 0..od.h {
                for x_ in 0..od.w {
                    out[od.offset(n, oc, y, x_)] = bias;
                }
            }
            for ic in 0..xd.c {
                for iy in 0..xd.h {
                    for ix in 0..xd.w {
                        for ky in 0..k {
                            for kx in 0..k {
                                out[od.offset(n, oc, iy * stride + ky, ix * stride + kx)] +=
                                    x.at(n, ic, iy, ix) * w.at(ic, oc, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(od, out).unwrap()
}

pub fn maxpool2(x: &Tensor<f64>) -> Tensor<f64> {
    let d = x.dims();
    Tensor::from_fn([d.n, d.c, d.h / 2, d.w / 2], |n, c, y, x_| {
        let mut m = f64::NEG_INFINITY;
        for dy in 0..2 {
            for dx in 0..2 {
                m = m.max(x.at(n, c, 2 * y + dy, 2 * x_ + dx));
            }
        }
        m
    })
}

pub fn avgpool(x: &Tensor<f64>) -> Tensor<f64> {
    let d = x.dims();
    Tensor::from_fn([d.n, d.c, 1, 1], |n, c, _, _| {
        let mut s = 0.0;
        for y in 0..d.h {
            for x_ in 0..d.w {
                s += x.at(n, c, y, x_);
            }
        }
        s / (d.h * d.w) as f64
    })
}

pub fn upsample2(x: &Tensor<f64>) -> Tensor<f64> {
    let d = x.dims();
    Tensor::from_fn([d.n, d.c, 2 * d.h, 2 * d.w], |n, c, y, x_| x.at(n, c, y / 2, x_ / 2))
}

pub fn silu(v: f64) -> f64 {
    v / (1.0 + (-v).exp())
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn concat(parts: &[&Tensor<f64>]) -> Tensor<f64> {
    let d0 = parts[0].dims();
    let c: usize = parts.iter().map(|p| p.dims().c).sum();
    Tensor::from_fn([d0.n, c, d0.h, d0.w], |n, mut ch, y, x| {
        for p in parts {
            if ch < p.dims().c {
                return p.at(n, ch, y, x);
            }
            ch -= p.dims().c;
        }
        unreachable!()
    })
}
