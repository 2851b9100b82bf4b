//! IDX containers (big-endian) as distributed with MNIST, optionally gzipped.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MnistSplit {
    Train,
    Test,
}

/// Raw 8-bit digits with their labels.
#[derive(Clone, Debug)]
pub struct RawMnist {
    pub split: MnistSplit,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, `rows * cols` per image.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawMnist {
    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: MnistSplit) -> Result<Self> {
        let (rows, cols, pixels) = read_idx_images(images)?;
        let labels = read_idx_labels(labels)?;
        Self::from_parts(split, rows, cols, pixels, labels)
    }

    pub fn from_parts(split: MnistSplit, rows: usize, cols: usize, images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != rows * cols * labels.len() {
            return Err(Error::format(
                "idx",
                format!(
                    "{} labels but {} image bytes of {rows}x{cols}",
                    labels.len(),
                    images.len()
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                classes: 10,
            });
        }
        Ok(RawMnist {
            split,
            rows,
            cols,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.images[index * n..(index + 1) * n]
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::format("idx", format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses an IDX byte buffer with unsigned-byte payload; returns the
/// dimensions and the payload.
pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<(Vec<usize>, Vec<u8>)> {
    if bytes.len() < 4 {
        return Err(Error::format("idx", "file shorter than the magic number"));
    }
    let magic = be_u32(bytes, 0);
    if magic != expected_magic {
        return Err(Error::format(
            "idx",
            format!("magic {magic} (expected {expected_magic})"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::format("idx", "truncated dimension header"));
    }
    let dims: Vec<usize> = (0..rank).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != count {
        return Err(Error::format(
            "idx",
            format!("payload has {} bytes, dimensions {dims:?} need {count}", payload.len()),
        ));
    }
    Ok((dims, payload.to_vec()))
}

/// Reads an images file; returns `(rows, cols, pixels)`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let (dims, data) = parse_idx(&read_maybe_gz(path)?, IMAGES_MAGIC)
        .map_err(|e| Error::format("idx", format!("{}: {e}", path.display())))?;
    Ok((dims[1], dims[2], data))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let (_, data) = parse_idx(&read_maybe_gz(path)?, LABELS_MAGIC)
        .map_err(|e| Error::format("idx", format!("{}: {e}", path.display())))?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut b = magic.to_be_bytes().to_vec();
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn parses_small_file() {
        let b = idx_bytes(IMAGES_MAGIC, &[2, 2, 3], &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
        let (dims, data) = parse_idx(&b, IMAGES_MAGIC).unwrap();
        assert_eq!(dims, vec![2, 2, 3]);
        assert_eq!(data[11], 12);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let b = idx_bytes(LABELS_MAGIC, &[3], &[1, 2, 3]);
        assert!(parse_idx(&b, IMAGES_MAGIC)
            .unwrap_err()
            .to_string()
            .contains("magic 2049"));
        assert!(parse_idx(&b[..6], LABELS_MAGIC).is_err());
        assert!(parse_idx(&b[..9], LABELS_MAGIC)
            .unwrap_err()
            .to_string()
            .contains("payload"));
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(RawMnist::from_parts(MnistSplit::Test, 1, 1, vec![0, 0], vec![3, 12]).is_err());
    }
}
