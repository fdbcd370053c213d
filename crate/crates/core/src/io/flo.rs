//! Middlebury `.flo` optical flow files.
//!
//! Layout: the float `202021.25` as little-endian bytes (ASCII `PIEH`),
//! `i32` width, `i32` height, then `width * height` interleaved `(u, v)`
//! `f32` pairs in row-major order. All values little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Dims, FlowField};

use super::{read_bytes, write_bytes};

pub const FLO_MAGIC: f32 = 202021.25;

const HEADER: usize = 12;

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < HEADER {
        return Err(Error::Length {
            expected: HEADER as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(Error::Format(format!("bad .flo magic {magic}")));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!("bad .flo dimensions {width}x{height}")));
    }
    let n = width as u64 * height as u64;
    let expected = 8u64
        .checked_mul(n)
        .and_then(|p| p.checked_add(HEADER as u64))
        .unwrap_or(u64::MAX);
    if bytes.len() as u64 != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let n = n as usize;
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    for pair in bytes[HEADER..].chunks_exact(8) {
        dx.push(f32::from_le_bytes(pair[0..4].try_into().unwrap()));
        dy.push(f32::from_le_bytes(pair[4..8].try_into().unwrap()));
    }
    FlowField::new(width as usize, height as usize, dx, dy)
}

pub fn encode_flo(flow: &FlowField) -> Result<Vec<u8>> {
    let (w, h) = flow.dims();
    let (w32, h32) = match (i32::try_from(w), i32::try_from(h)) {
        (Ok(w), Ok(h)) => (w, h),
        _ => return Err(Error::Format(format!("{w}x{h} does not fit a .flo header"))),
    };
    let mut out = Vec::with_capacity(HEADER + 8 * flow.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    out.extend_from_slice(&h32.to_le_bytes());
    for (u, v) in flow.dx().iter().zip(flow.dy()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    decode_flo(&read_bytes(path)?).map_err(|e| e.at(path))
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_flo(flow)?)
}
