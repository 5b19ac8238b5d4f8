use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::dataset::BinaryImageDataset;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
/// Pixels at or above this intensity binarize to 1.
pub const BINARIZE_THRESHOLD: u8 = 128;

fn idx_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Idx {
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| idx_err(offset, format!("truncated while reading {what}")))?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads a file, inflating it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Raw `u8` image tensor `(n, rows, cols, pixels)` from IDX bytes.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(idx_err(0, format!("expected magic {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}")));
    }
    let n = read_u32(bytes, 4, "image count")? as usize;
    let h = read_u32(bytes, 8, "row count")? as usize;
    let w = read_u32(bytes, 12, "column count")? as usize;
    let len = n * h * w;
    let pixels = &bytes[16.min(bytes.len())..];
    if pixels.len() < len {
        return Err(idx_err(
            16 + pixels.len(),
            format!("truncated pixel data: need {len} bytes, found {}", pixels.len()),
        ));
    }
    if pixels.len() > len {
        return Err(idx_err(16 + len, format!("{} trailing bytes", pixels.len() - len)));
    }
    Ok((n, h, w, pixels))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(idx_err(0, format!("expected magic {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}")));
    }
    let n = read_u32(bytes, 4, "label count")? as usize;
    let labels = &bytes[8.min(bytes.len())..];
    if labels.len() != n {
        return Err(idx_err(8 + labels.len().min(n), format!("expected {n} labels, found {}", labels.len())));
    }
    Ok(labels.to_vec())
}

/// Binarized images from IDX bytes.
pub fn decode_idx(bytes: &[u8]) -> Result<BinaryImageDataset> {
    let (n, h, w, pixels) = parse_idx_images(bytes)?;
    let data = pixels
        .iter()
        .map(|&p| if p >= BINARIZE_THRESHOLD { 1.0 } else { 0.0 })
        .collect();
    BinaryImageDataset::new(n, h, w, data)
}

/// Loads an IDX image file (optionally gzip-compressed) and binarizes it.
pub fn load_idx(path: &Path) -> Result<BinaryImageDataset> {
    decode_idx(&read_maybe_gz(path)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_maybe_gz(path)?)
}

/// IDX image bytes for `n` images of `h x w` pixels.
pub fn encode_idx_images(n: usize, h: usize, w: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != n * h * w {
        return Err(Error::DimensionMismatch {
            context: "idx pixel count",
            expected: n * h * w,
            actual: pixels.len(),
        });
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// The two-image 2x2 fixture used by the tests and the `fixtures` command.
pub fn two_image_fixture() -> Vec<u8> {
    encode_idx_images(2, 2, 2, &[0, 127, 128, 255, 255, 0, 3, 200]).expect("consistent extents")
}
