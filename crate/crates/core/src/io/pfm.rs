//! Grayscale little-endian PFM (portable float map).
//!
//! Header: `Pf`, then `width height`, then a scale whose negative sign marks
//! little-endian data, each terminated by a single whitespace byte. Rows
//! follow bottom-to-top as `f32`. Color (`PF`) and big-endian files are
//! rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Dims, ScalarPlane};

use super::{read_bytes, write_bytes};

/// Splits the next whitespace-delimited header token off `bytes[*pos..]`,
/// consuming exactly one trailing whitespace byte.
fn token<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(Error::Format(format!("PFM header ends before {what}")));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::Format(format!("PFM {what} is not ASCII")))?;
    *pos += 1;
    Ok(tok)
}

fn dimension(tok: &str, what: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::Format(format!("PFM {what} {tok:?} is not a positive integer"))),
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ScalarPlane> {
    let mut pos = 0;
    match token(bytes, &mut pos, "magic")? {
        "Pf" => {}
        "PF" => return Err(Error::UnsupportedFormat("color PFM (PF) is not supported".into())),
        other => return Err(Error::Format(format!("bad PFM magic {other:?}"))),
    }
    let width = dimension(token(bytes, &mut pos, "width")?, "width")?;
    let height = dimension(token(bytes, &mut pos, "height")?, "height")?;
    let scale_tok = token(bytes, &mut pos, "scale")?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::Format(format!("PFM scale {scale_tok:?} is not a number")))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::Format(format!("PFM scale {scale_tok:?} is invalid")));
    }
    if scale > 0.0 {
        return Err(Error::UnsupportedFormat("big-endian PFM is not supported".into()));
    }
    let expected = (width as u64)
        .checked_mul(height as u64)
        .and_then(|n| n.checked_mul(4))
        .and_then(|b| b.checked_add(pos as u64))
        .unwrap_or(u64::MAX);
    if bytes.len() as u64 != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let stored: Vec<f32> = bytes[pos..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = stored.chunks_exact(width).rev().flatten().copied().collect();
    ScalarPlane::new(width, height, data)
}

pub fn encode_pfm(plane: &ScalarPlane) -> Vec<u8> {
    let (w, h) = plane.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for row in plane.data().chunks_exact(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ScalarPlane> {
    let path = path.as_ref();
    decode_pfm(&read_bytes(path)?).map_err(|e| e.at(path))
}

pub fn write_pfm(plane: &ScalarPlane, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(plane))
}
