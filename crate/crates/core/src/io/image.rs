//! PNG label maps (8-bit grayscale) and RGB images (8-bit RGB).

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::raster::{ClassSpace, Dims, LabelMap, RgbImage};

use super::{read_bytes, write_bytes};

fn png_error(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::Io(io),
        other => Error::Format(format!("png: {other}")),
    }
}

/// Decodes without any pixel transformation, requiring the given layout.
fn decode_raw(bytes: &[u8], color: ColorType, what: &str) -> Result<(usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_error)?;
    let info = reader.info();
    if info.color_type != color || info.bit_depth != BitDepth::Eight {
        return Err(Error::Format(format!(
            "{what} must be 8-bit {color:?}, found {:?} {:?}-bit",
            info.color_type, info.bit_depth as u8
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Format("png too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(png_error)?;
    buf.truncate(frame.buffer_size());
    Ok((w, h, buf))
}

fn encode_raw(w: usize, h: usize, color: ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let (w32, h32) = match (u32::try_from(w), u32::try_from(h)) {
        (Ok(w), Ok(h)) => (w, h),
        _ => return Err(Error::Format(format!("{w}x{h} does not fit a png header"))),
    };
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, w32, h32);
    encoder.set_color(color);
    encoder.set_depth(BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    writer.finish().map_err(|e| Error::Format(format!("png: {e}")))?;
    Ok(out)
}

pub fn decode_label_png(bytes: &[u8], class_space: ClassSpace) -> Result<LabelMap> {
    let (w, h, data) = decode_raw(bytes, ColorType::Grayscale, "label png")?;
    LabelMap::new(w, h, data, class_space)
}

pub fn encode_label_png(labels: &LabelMap) -> Result<Vec<u8>> {
    encode_raw(labels.width(), labels.height(), ColorType::Grayscale, labels.data())
}

pub fn read_label_png(path: impl AsRef<Path>, class_space: ClassSpace) -> Result<LabelMap> {
    let path = path.as_ref();
    decode_label_png(&read_bytes(path)?, class_space).map_err(|e| e.at(path))
}

pub fn write_label_png(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_label_png(labels)?)
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    let (w, h, data) = decode_raw(bytes, ColorType::Rgb, "image png")?;
    RgbImage::new(w, h, data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn encode_rgb_png(image: &RgbImage) -> Result<Vec<u8>> {
    let flat: Vec<u8> = image.data().iter().flatten().copied().collect();
    encode_raw(image.width(), image.height(), ColorType::Rgb, &flat)
}

pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    decode_rgb_png(&read_bytes(path)?).map_err(|e| e.at(path))
}

pub fn write_rgb_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_rgb_png(image)?)
}
