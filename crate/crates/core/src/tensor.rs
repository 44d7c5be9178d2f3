use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Batch, channel, row and column extents of a rank-4 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Dims::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn with_c(self, c: usize) -> Self {
        Dims { c, ..self }
    }

    pub fn with_hw(self, h: usize, w: usize) -> Self {
        Dims { h, w, ..self }
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Dims {
    fn from(d: [usize; 4]) -> Self {
        Dims::new(d[0], d[1], d[2], d[3])
    }
}

/// Dense row-major NCHW tensor. Immutable once built unless explicitly
/// borrowed mutably through [`Tensor::data_mut`].
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if dims.as_array().contains(&0) {
            return Err(Error::ZeroDim(dims));
        }
        if dims.numel() != data.len() {
            return Err(Error::DataLength { dims, len: data.len() });
        }
        Ok(Tensor { dims, data })
    }

    pub fn full(dims: impl Into<Dims>, value: T) -> Self {
        let dims = dims.into();
        assert!(!dims.as_array().contains(&0), "zero dim in {dims}");
        Tensor {
            dims,
            data: vec![value; dims.numel()],
        }
    }

    pub fn zeros(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::full(Dims::scalar(), value)
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` at every index.
    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let dims = dims.into();
        let mut data = Vec::with_capacity(dims.numel());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for h in 0..dims.h {
                    for w in 0..dims.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor::new(dims, data).expect("from_fn dims")
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.dims.offset(n, c, h, w)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch {
                op: "zip_map",
                detail: format!("{} vs {}", self.dims, other.dims),
            });
        }
        Ok(Tensor {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Inner product accumulated in double precision.
    pub fn dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum()
    }

    pub fn reshape(self, dims: impl Into<Dims>) -> Result<Self> {
        Tensor::new(dims, self.data)
    }

    /// Channel range `[start, end)` as a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Self> {
        let d = self.dims;
        if start >= end || end > d.c {
            return Err(Error::ShapeMismatch {
                op: "slice_channels",
                detail: format!("range {start}..{end} outside {} channels", d.c),
            });
        }
        let plane = d.plane();
        let mut data = Vec::with_capacity(d.n * (end - start) * plane);
        for n in 0..d.n {
            let base = d.offset(n, start, 0, 0);
            data.extend_from_slice(&self.data[base..base + (end - start) * plane]);
        }
        Tensor::new(d.with_c(end - start), data)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest elementwise |a-b| / max(|a|,|b|,floor), in f64.
    pub fn max_rel_diff(&self, other: &Self, floor: f64) -> f64 {
        assert_eq!(self.dims, other.dims, "max_rel_diff dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let (a, b) = (a.as_f64(), b.as_f64());
                (a - b).abs() / a.abs().max(b.abs()).max(floor)
            })
            .fold(0.0, f64::max)
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{} [", self.dims)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v:?}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ... {} more", self.data.len() - SHOWN)?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths_and_zero_dims() {
        assert!(matches!(
            Tensor::<f32>::new([1, 2, 2, 2], vec![0.0; 7]),
            Err(Error::DataLength { .. })
        ));
        assert!(matches!(
            Tensor::<f32>::new([1, 0, 2, 2], vec![]),
            Err(Error::ZeroDim(_))
        ));
    }

    #[test]
    fn offset_is_row_major_nchw() {
        let t = Tensor::<f64>::from_fn([2, 3, 4, 5], |n, c, h, w| (n * 1000 + c * 100 + h * 10 + w) as f64);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.dims().offset(1, 2, 3, 4)], 1234.0);
        assert_eq!(t.data()[1], 1.0);
    }

    #[test]
    fn slice_channels_picks_slab() {
        let t = Tensor::<f64>::from_fn([2, 4, 2, 2], |n, c, _, _| (n * 10 + c) as f64);
        let s = t.slice_channels(1, 3).unwrap();
        assert_eq!(s.dims(), Dims::new(2, 2, 2, 2));
        assert_eq!(s.at(1, 0, 1, 1), 11.0);
        assert_eq!(s.at(0, 1, 0, 0), 2.0);
        assert!(t.slice_channels(3, 5).is_err());
    }
}
