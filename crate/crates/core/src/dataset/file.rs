//! Generated dataset files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "MNLS"   magic
//! u32      version (1)
//! u32      image side length
//! u32      record count
//! u32      scale mode (0 fixed, 1 log-uniform)
//! f64      s_min (equals s_max for fixed)
//! f64      s_max
//! u64      seed
//! records: u8 label, f32 scale, side*side f32 pixels (row-major)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::spec::{ScaleMode, ScaleSpec, Split};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MNLS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 * 4 + 8 * 3;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub size: usize,
    pub spec: ScaleSpec,
    pub labels: Vec<u8>,
    pub scales: Vec<f32>,
    /// `count * size * size` pixels.
    pub pixels: Vec<f32>,
}

impl DatasetFile {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn record_len(&self) -> usize {
        1 + 4 + 4 * self.size * self.size
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.pixels[index * n..(index + 1) * n]
    }

    /// Images at `indices` as a `[B, 1, size, size]` tensor plus labels.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let n = self.size * self.size;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        let x = Tensor::from_vec(&[indices.len(), 1, self.size, self.size], data).expect("sized");
        (x, indices.iter().map(|&i| self.labels[i] as usize).collect())
    }

    /// Keeps only the records at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> DatasetFile {
        let n = self.size * self.size;
        let mut pixels = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        DatasetFile {
            size: self.size,
            spec: self.spec,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            scales: indices.iter().map(|&i| self.scales[i]).collect(),
            pixels,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.len() * self.record_len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.size as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        let (mode, (lo, hi)) = match self.spec.mode {
            ScaleMode::Fixed { .. } => (0u32, self.spec.range()),
            ScaleMode::LogUniform { .. } => (1u32, self.spec.range()),
        };
        buf.extend_from_slice(&mode.to_le_bytes());
        buf.extend_from_slice(&lo.to_le_bytes());
        buf.extend_from_slice(&hi.to_le_bytes());
        buf.extend_from_slice(&self.spec.seed.to_le_bytes());
        for i in 0..self.len() {
            buf.push(self.labels[i]);
            buf.extend_from_slice(&self.scales[i].to_le_bytes());
            for v in self.image(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::format("dataset", reason);
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4"));
        let f64_at = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let size = u32_at(8) as usize;
        let count = u32_at(12) as usize;
        let (lo, hi) = (f64_at(20), f64_at(28));
        let seed = u64::from_le_bytes(bytes[36..44].try_into().expect("8"));
        let mode = match u32_at(16) {
            0 => ScaleMode::Fixed { s: lo },
            1 => ScaleMode::LogUniform { s_min: lo, s_max: hi },
            m => return Err(bad(format!("unknown scale mode {m}"))),
        };
        let record = 5 + 4 * size * size;
        let expected = HEADER_LEN + count * record;
        if bytes.len() != expected {
            return Err(bad(format!("length {} but header implies {expected}", bytes.len())));
        }
        let mut labels = Vec::with_capacity(count);
        let mut scales = Vec::with_capacity(count);
        let mut pixels = Vec::with_capacity(count * size * size);
        for rec in bytes[HEADER_LEN..].chunks_exact(record) {
            labels.push(rec[0]);
            scales.push(f32::from_le_bytes(rec[1..5].try_into().expect("4")));
            pixels.extend(
                rec[5..]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4"))),
            );
        }
        Ok(DatasetFile {
            size,
            spec: ScaleSpec { mode, seed },
            labels,
            scales,
            pixels,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    /// Writes the file and its manifest; returns the SHA-256 of the file.
    pub fn save(&self, path: impl AsRef<Path>, split: &Split) -> Result<String> {
        let path = path.as_ref();
        let bytes = self.encode();
        let digest = hex::encode(Sha256::digest(&bytes));
        fs::write(path, &bytes)?;
        fs::write(manifest_path(path), self.manifest(split, &digest))?;
        Ok(digest)
    }

    /// `key = value` manifest echoing the generation settings.
    pub fn manifest(&self, split: &Split, sha256: &str) -> String {
        let (lo, hi) = self.spec.range();
        let mode = match self.spec.mode {
            ScaleMode::Fixed { .. } => "fixed",
            ScaleMode::LogUniform { .. } => "log_uniform",
        };
        format!(
            "format = \"MNLS\"\nversion = {VERSION}\nsize = {}\ncount = {}\nmode = \"{mode}\"\ns_min = {lo:?}\ns_max = {hi:?}\nseed = {}\nsplit = \"{}\"\nsha256 = \"{sha256}\"\n",
            self.size,
            self.len(),
            self.spec.seed,
            split.name()
        )
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetFile {
        DatasetFile {
            size: 2,
            spec: ScaleSpec::log_uniform(1.0, 4.0, 3),
            labels: vec![7, 1],
            scales: vec![1.5, 3.25],
            pixels: vec![0.0, -0.5, 0.25, 1.0, 0.125, -1.0, 0.5, 0.75],
        }
    }

    #[test]
    fn length_invariant_and_round_trip() {
        let f = sample();
        let bytes = f.encode();
        assert_eq!(bytes.len(), HEADER_LEN + f.len() * f.record_len());
        assert_eq!(DatasetFile::decode(&bytes).unwrap(), f);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode();
        assert!(DatasetFile::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(DatasetFile::decode(&b).is_err());
    }

    #[test]
    fn batch_layout() {
        let (x, y) = sample().batch::<f64>(&[1]);
        assert_eq!(x.shape(), &[1, 1, 2, 2]);
        assert_eq!(x.data(), &[0.125, -1.0, 0.5, 0.75]);
        assert_eq!(y, vec![1]);
    }
}
