//! Parameter checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SCHN"            magic, 4 bytes
//! u32               format version (1)
//! repeated until EOF:
//!   u32             name length in bytes
//!   [u8]            UTF-8 name
//!   u32             rank
//!   u64 * rank      extents
//!   f32 * numel     values, little-endian
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"SCHN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl Entry {
    pub fn from_values<T: Real>(name: impl Into<String>, shape: &[usize], values: &[T]) -> Self {
        Entry {
            name: name.into(),
            shape: shape.to_vec(),
            values: values.iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect(),
        }
    }

    pub fn values_as<T: Real>(&self) -> Vec<T> {
        self.values.iter().map(|&v| T::from_f64_lossy(v as f64)).collect()
    }
}

pub fn encode(entries: &[Entry]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for e in entries {
        buf.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.name.as_bytes());
        buf.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &e.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                "checkpoint",
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<Entry>> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic (expected \"SCHN\")"));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let mut entries = Vec::new();
    while cur.pos < buf.len() {
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|e| Error::format("checkpoint", format!("name is not UTF-8: {e}")))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        let shape = (0..rank)
            .map(|_| cur.u64("extent").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::format("checkpoint", format!("extents of {name} overflow")))?;
        let bytes = cur.take(numel.saturating_mul(4), "values")?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(Entry { name, shape, values });
    }
    Ok(entries)
}

pub fn save(path: impl AsRef<Path>, entries: &[Entry]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(entries))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Entry>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}
