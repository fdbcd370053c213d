//! Readers and writers for the on-disk artifacts.
//!
//! Every reader validates the whole byte stream and reports a typed error
//! instead of clamping or coercing. Every writer produces bytes its reader
//! decodes back to an identical value.

mod flo;
mod image;
mod manifest;
mod pfm;

pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use image::{
    decode_label_png, decode_rgb_png, encode_label_png, encode_rgb_png, read_label_png, read_rgb_png,
    write_label_png, write_rgb_png,
};
pub use manifest::{frame_stem, load_manifest, parse_manifest, DatasetManifest, Domain, ManifestRecord, Split};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::from(e).at(path))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::from(e).at(path))
}
