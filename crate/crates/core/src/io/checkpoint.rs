use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::tensor_file::{read_tensor, write_tensor, AnyTensor};
use crate::io::{truncated, write_atomic};
use crate::layers::Parameters;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"AFCK";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub tensor: AnyTensor,
}

/// Serialises every parameter of `model` in visit order.
pub fn write_checkpoint<T: Scalar>(model: &dyn Parameters<T>) -> Result<Vec<u8>> {
    let mut count = 0u32;
    let mut body = Vec::new();
    let mut err = None;
    model.visit(&mut |name, t| {
        let Ok(len) = u16::try_from(name.len()) else {
            err.get_or_insert_with(|| Error::Format(format!("parameter name too long: {name}")));
            return;
        };
        body.extend_from_slice(&len.to_le_bytes());
        body.extend_from_slice(name.as_bytes());
        write_tensor(t, &mut body);
        count += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut out = Vec::with_capacity(8 + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Vec<CheckpointEntry>> {
    let mut input = bytes;
    if input.len() < 8 {
        return Err(truncated("checkpoint header"));
    }
    if &input[..4] != MAGIC {
        return Err(Error::Format("bad checkpoint magic, expected AFCK".into()));
    }
    let count = u32::from_le_bytes(input[4..8].try_into().expect("4 bytes"));
    input = &input[8..];
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        if input.len() < 2 {
            return Err(truncated("checkpoint entry"));
        }
        let len = u16::from_le_bytes([input[0], input[1]]) as usize;
        input = &input[2..];
        if input.len() < len {
            return Err(truncated("checkpoint entry name"));
        }
        let name = std::str::from_utf8(&input[..len])
            .map_err(|_| Error::Format("checkpoint entry name is not UTF-8".into()))?
            .to_owned();
        input = &input[len..];
        let tensor = read_tensor(&mut input)?;
        entries.push(CheckpointEntry { name, tensor });
    }
    if !input.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            input.len()
        )));
    }
    Ok(entries)
}

/// Copies `entries` into `model`. Every parameter must be present with equal
/// dims and every entry must be used; stored precision is converted to `T`.
pub fn apply_checkpoint<T: Scalar>(model: &mut dyn Parameters<T>, entries: Vec<CheckpointEntry>) -> Result<()> {
    let mut by_name: HashMap<String, AnyTensor> = HashMap::with_capacity(entries.len());
    for e in entries {
        if by_name.insert(e.name.clone(), e.tensor).is_some() {
            return Err(Error::Checkpoint(format!("duplicate entry `{}`", e.name)));
        }
    }
    let mut problems = Vec::new();
    model.visit_mut(&mut |name, t| match by_name.remove(name) {
        None => problems.push(format!("missing `{name}`")),
        Some(stored) if stored.dims() != t.dims() => problems.push(format!(
            "`{name}` has dims {} in the checkpoint but {} in the model",
            stored.dims(),
            t.dims()
        )),
        Some(stored) => *t = stored.cast(),
    });
    let mut extra: Vec<_> = by_name.into_keys().collect();
    extra.sort();
    problems.extend(extra.into_iter().map(|n| format!("unexpected `{n}`")));
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Checkpoint(problems.join("; ")))
    }
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &dyn Parameters<T>) -> Result<()> {
    write_atomic(path.as_ref(), &write_checkpoint(model)?)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &mut dyn Parameters<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    apply_checkpoint(model, read_checkpoint(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Conv, ConvSpec};
    use crate::rng::SeedStream;

    #[test]
    fn round_trip_and_mismatch() {
        let a = Conv::<f64>::init("c", ConvSpec::new(2, 3, 3), &SeedStream::new(1));
        let bytes = write_checkpoint(&a).unwrap();
        let mut b = Conv::<f64>::init("c", ConvSpec::new(2, 3, 3), &SeedStream::new(2));
        apply_checkpoint(&mut b, read_checkpoint(&bytes).unwrap()).unwrap();
        assert_eq!(write_checkpoint(&b).unwrap(), bytes);

        let mut wrong = Conv::<f64>::init("c", ConvSpec::new(2, 4, 3), &SeedStream::new(2));
        let err = apply_checkpoint(&mut wrong, read_checkpoint(&bytes).unwrap()).unwrap_err();
        assert!(err.to_string().contains("c.weight"), "{err}");

        let mut renamed = Conv::<f64>::init("d", ConvSpec::new(2, 3, 3), &SeedStream::new(2));
        let err = apply_checkpoint(&mut renamed, read_checkpoint(&bytes).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("missing `d.weight`") && msg.contains("unexpected `c.bias`"),
            "{msg}"
        );
    }
}
