use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

struct Header {
    channels: usize,
    width: usize,
    height: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => pos += 1,
            _ => break,
        }
    }
    pos
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    *pos = skip_space_and_comments(bytes, *pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format(format!("PNM header: expected {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .expect("ascii digits")
        .parse()
        .map_err(|_| Error::Format(format!("PNM header: {what} out of range")))
}

fn header(bytes: &[u8]) -> Result<(Header, usize)> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some([b'P', d]) if d.is_ascii_digit() => {
            return Err(Error::Format(format!(
                "unsupported PNM format P{}; only binary P5 (PGM) and P6 (PPM) are read",
                *d as char
            )))
        }
        _ => return Err(Error::Format("not a PNM file (bad magic)".into())),
    };
    let mut pos = 2;
    let width = number(bytes, &mut pos, "width")?;
    let height = number(bytes, &mut pos, "height")?;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("PNM maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("PNM size {width}x{height} is empty")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("truncated PNM header".into())),
    }
    Ok((
        Header {
            channels,
            width,
            height,
        },
        pos,
    ))
}

/// Decodes binary PGM/PPM into `(1, 3, H, W)` with values in `[0, 1]`.
/// Grey images are replicated to three channels.
pub fn decode_pnm<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let (h, start) = header(bytes)?;
    let plane = h.width * h.height;
    let need = plane * h.channels;
    let raster = &bytes[start..];
    if raster.len() < need {
        return Err(Error::Format(format!(
            "truncated PNM payload: expected {need} bytes, found {}",
            raster.len()
        )));
    }
    let scale = 1.0 / 255.0;
    Ok(Tensor::from_fn([1, 3, h.height, h.width], |_, c, y, x| {
        let px = y * h.width + x;
        let idx = if h.channels == 3 { px * 3 + c } else { px };
        T::from_f64(raster[idx] as f64 * scale)
    }))
}

pub fn load_image_pnm<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
