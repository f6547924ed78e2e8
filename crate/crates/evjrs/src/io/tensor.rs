//! Flat row-major matrix of f64: magic, `u32` version, `u64` row and column
//! counts, then the values, all little-endian.

use std::path::Path;

use evjrs_core::learner::Mat;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"EVJRSTEN";
pub const TENSOR_VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8 + 8;

pub fn encode_tensor(m: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols as u64).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(path: &Path, bytes: &[u8]) -> Result<Mat> {
    let bad = |offset: usize, msg: String| Error::format(path, Some(offset), msg);
    if bytes.len() < HEADER {
        return Err(bad(
            bytes.len(),
            format!("truncated header ({} bytes)", bytes.len()),
        ));
    }
    if &bytes[..8] != TENSOR_MAGIC {
        return Err(bad(0, String::from("not a tensor file (bad magic)")));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(bad(8, format!("unsupported tensor version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok());
    match count {
        Some(n) if n == bytes.len() - HEADER => {}
        _ => {
            return Err(bad(
                HEADER,
                format!(
                    "{rows}x{cols} tensor does not match {} payload bytes",
                    bytes.len() - HEADER
                ),
            ))
        }
    }
    let data = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Mat::from_vec(rows as usize, cols as usize, data))
}

pub fn read_tensor(path: &Path) -> Result<Mat> {
    decode_tensor(path, &read_bytes(path)?)
}

pub fn write_tensor(path: &Path, m: &Mat) -> Result<()> {
    write_bytes(path, &encode_tensor(m))
}
