//! Binary tensor files.
//!
//! Little-endian layout: `b"DTNS"`, format version (u32), extents n, c, h, w
//! (u32 each), then `n*c*h*w` IEEE-754 single-precision values in row-major
//! order. No padding, no checksum.

use std::fs;
use std::path::Path;

use super::{Shape, Tensor, TensorError};

pub const FILE_MAGIC: [u8; 4] = *b"DTNS";
pub const FILE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 16;

pub fn tensor_to_bytes(t: &Tensor) -> Result<Vec<u8>, TensorError> {
    let s = t.shape();
    let extent = |v: usize| u32::try_from(v).map_err(|_| TensorError::Overflow(s));
    let extents = [extent(s.n)?, extent(s.c)?, extent(s.h)?, extent(s.w)?];

    let mut out = Vec::with_capacity(HEADER_LEN + 4 * s.len());
    out.extend_from_slice(&FILE_MAGIC);
    out.extend_from_slice(&FILE_VERSION.to_le_bytes());
    for e in extents {
        out.extend_from_slice(&e.to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor, TensorError> {
    if bytes.len() < 4 {
        return Err(TensorError::TruncatedHeader);
    }
    if bytes[..4] != FILE_MAGIC {
        return Err(TensorError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(TensorError::TruncatedHeader);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FILE_VERSION {
        return Err(TensorError::UnsupportedVersion(version));
    }
    let (n, c, h, w) = (word(8), word(12), word(16), word(20));

    let count = [n, c, h, w].iter().try_fold(1u64, |acc, &e| acc.checked_mul(e as u64));
    let overflow = TensorError::ExtentOverflow { n, c, h, w };
    let count = count.ok_or(overflow)?;
    let byte_len = count.checked_mul(4).ok_or(TensorError::ExtentOverflow { n, c, h, w })?;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found < byte_len {
        return Err(TensorError::TruncatedData {
            expected: byte_len,
            found,
        });
    }
    if found > byte_len {
        return Err(TensorError::TrailingBytes);
    }
    let shape = Shape::new(n as usize, c as usize, h as usize, w as usize)?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Tensor::from_vec(shape, data)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<(), TensorError> {
    fs::write(path, tensor_to_bytes(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    tensor_from_bytes(&fs::read(path)?)
}
