//! IDX image/label files (the MNIST distribution format).
//!
//! Headers are big-endian `u32`s: magic `0x00000803` followed by count, rows
//! and columns for images; magic `0x00000801` followed by count for labels.
//! Pixels and labels are single unsigned bytes. Files ending in `.gz` are
//! decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use super::{Dataset, FeatureSchema, Split};
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|ext| ext == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn header(path: &Path, bytes: &[u8], magic: u32, words: usize) -> Result<Vec<u32>> {
    if bytes.len() >= 4 {
        let found = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        if found != magic {
            return Err(parse_error(path, 0, format!("bad magic {found:#010x}, expected {magic:#010x}")));
        }
    }
    if bytes.len() < 4 * words {
        return Err(parse_error(path, bytes.len(), "file ends inside the header"));
    }
    Ok(bytes[..4 * words]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(parse_error(
            path,
            bytes.len(),
            format!("truncated: header promises {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(parse_error(path, expected, "trailing bytes after payload"));
    }
    Ok(())
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let h = header(path, bytes, IMAGE_MAGIC, 4)?;
    let (n, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    if rows == 0 || cols == 0 {
        return Err(parse_error(path, 8, format!("degenerate image size {rows}x{cols}")));
    }
    check_len(path, bytes, 16 + n * rows * cols)?;
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let h = header(path, bytes, LABEL_MAGIC, 2)?;
    let n = h[1] as usize;
    check_len(path, bytes, 8 + n)?;
    if let Some(pos) = bytes[8..].iter().position(|&l| l > 9) {
        return Err(parse_error(path, 8 + pos, format!("label {} outside 0-9", bytes[8 + pos])));
    }
    Ok(bytes[8..].to_vec())
}

/// Loads an image/label pair. Pixels are scaled to `[0, 1]`; all rows get
/// group 0.
pub fn load_idx_images(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let image_bytes = read_bytes(images)?;
    let (n, rows, cols, pixels) = parse_images(images, &image_bytes)?;
    let label_bytes = read_bytes(labels)?;
    let label_values = parse_labels(labels, &label_bytes)?;
    if label_values.len() != n {
        return Err(parse_error(
            labels,
            4,
            format!("{} labels for {n} images", label_values.len()),
        ));
    }
    let features = Array2::from_shape_vec((n, rows * cols), pixels)
        .expect("length checked")
        .mapv(|p| f64::from(p) / 255.0);
    Dataset::new(
        features,
        label_values.into_iter().map(usize::from).collect(),
        vec![0; n],
        10,
        split,
        FeatureSchema::Image {
            height: rows,
            width: cols,
        },
    )
}

pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for word in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
