//! IDX files (the MNIST distribution format): a big-endian magic number
//! `0x000008NN` (unsigned bytes, `NN` dimensions), one big-endian `u32` per
//! dimension, then the raw bytes.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::TruncatedFile(format!("{what}: header ends at byte {}", bytes.len())))
}

/// Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::TruncatedFile(format!(
            "images: expected {need} pixel bytes, found {}",
            body.len()
        )));
    }
    Ok((n, rows, cols, &body[..need]))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::TruncatedFile(format!(
            "labels: expected {n} bytes, found {}",
            body.len()
        )));
    }
    Ok(&body[..n])
}

/// Loads an image/label IDX pair. Pixels keep their raw `[0, 255]` scale and
/// the declared bounds are `[0, 255]` per pixel.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = fs::read(images_path.as_ref())?;
    let labels = fs::read(labels_path.as_ref())?;
    let (n, rows, cols, pixels) = read_idx_images(&images)?;
    let labels = read_idx_labels(&labels)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let dim = rows * cols;
    let values = pixels.iter().map(|&p| p as f64).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().copied().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(
        dim,
        values,
        labels,
        class_count,
        format!("idx:{}", images_path.as_ref().display()),
    )?
    .with_bounds(vec![(0.0, 255.0); dim])
}

pub fn write_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for v in [n, rows, cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_magic() {
        let mut img = write_idx_images(2, 2, &[1, 2, 3, 4]);
        img[3] = 0x01;
        assert!(matches!(read_idx_images(&img), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated() {
        let img = write_idx_images(2, 2, &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert!(matches!(
            read_idx_images(&img[..img.len() - 1]),
            Err(Error::TruncatedFile(_))
        ));
        assert!(matches!(
            read_idx_images(&img[..10]),
            Err(Error::TruncatedFile(_))
        ));
        let lab = write_idx_labels(&[1, 2, 3]);
        assert!(matches!(
            read_idx_labels(&lab[..9]),
            Err(Error::TruncatedFile(_))
        ));
    }
}
