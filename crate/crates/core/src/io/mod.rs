//! File formats: AFT1 tensors, AFCK checkpoints and binary PNM images.
//!
//! AFT1: `"AFT1"`, u8 scalar kind (0 = f32, 1 = f64), u8 rank, rank x u64 LE
//! dims, then the scalars in LE row-major order.
//!
//! AFCK: `"AFCK"`, u32 LE entry count, then per entry a u16 LE name length,
//! the UTF-8 name and an AFT1 record.

mod checkpoint;
mod pnm;
mod tensor_file;

use std::path::Path;

use crate::error::{Error, Result};

pub use checkpoint::{
    apply_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointEntry,
};
pub use pnm::{decode_pnm, load_image_pnm};
pub use tensor_file::{read_tensor, read_tensor_file, write_tensor, write_tensor_file, AnyTensor};

/// Writes to a temporary file in the target directory, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn truncated(what: &str) -> Error {
    Error::Format(format!("truncated {what}"))
}
