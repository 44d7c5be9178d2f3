use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{truncated, write_atomic};
use crate::scalar::{Scalar, ScalarKind};
use crate::tensor::{Dims, Tensor};

const MAGIC: &[u8; 4] = b"AFT1";

/// A tensor read from disk in whichever precision it was stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn kind(&self) -> ScalarKind {
        match self {
            AnyTensor::F32(_) => ScalarKind::F32,
            AnyTensor::F64(_) => ScalarKind::F64,
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
        }
    }

    /// Converts to `T`, rounding when narrowing f64 to f32.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

/// Appends one AFT1 record (always rank 4).
pub fn write_tensor<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) {
    out.reserve(4 + 2 + 32 + t.numel() * T::KIND.size());
    out.extend_from_slice(MAGIC);
    out.push(T::KIND.code());
    out.push(4);
    for d in t.dims().as_array() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        x.write_le(out);
    }
}

fn take<'a>(input: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(truncated(what));
    }
    let (head, rest) = input.split_at(n);
    *input = rest;
    Ok(head)
}

fn read_data<T: Scalar>(input: &mut &[u8], dims: Dims) -> Result<Tensor<T>> {
    let size = T::KIND.size();
    let bytes = dims
        .numel()
        .checked_mul(size)
        .ok_or_else(|| Error::Format(format!("tensor dims {dims} overflow")))?;
    let raw = take(input, bytes, "tensor payload")?;
    let data = raw.chunks_exact(size).map(T::read_le).collect();
    Tensor::new(dims, data)
}

/// Reads one AFT1 record from the front of `input` and advances past it.
/// Ranks below 4 are padded with leading ones.
pub fn read_tensor(input: &mut &[u8]) -> Result<AnyTensor> {
    if take(input, 4, "tensor header")? != MAGIC {
        return Err(Error::Format("bad tensor magic, expected AFT1".into()));
    }
    let head = take(input, 2, "tensor header")?;
    let kind =
        ScalarKind::from_code(head[0]).ok_or_else(|| Error::Format(format!("unknown scalar kind code {}", head[0])))?;
    let rank = head[1] as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::Format(format!("unsupported tensor rank {rank}, expected 1..=4")));
    }
    let mut dims = [1usize; 4];
    for slot in &mut dims[4 - rank..] {
        let raw = take(input, 8, "tensor dims")?;
        let d = u64::from_le_bytes(raw.try_into().expect("8 bytes"));
        *slot = usize::try_from(d).map_err(|_| Error::Format(format!("dim {d} too large")))?;
    }
    let dims = Dims::from(dims);
    Ok(match kind {
        ScalarKind::F32 => AnyTensor::F32(read_data(input, dims)?),
        ScalarKind::F64 => AnyTensor::F64(read_data(input, dims)?),
    })
}

pub fn write_tensor_file<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(t, &mut buf);
    write_atomic(path.as_ref(), &buf)
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut input = bytes.as_slice();
    let t = read_tensor(&mut input)?;
    if !input.is_empty() {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after tensor record",
            path.display(),
            input.len()
        )));
    }
    Ok(t)
}
