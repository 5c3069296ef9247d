//! SSEB v1 embedding tables backing the deep-feature metric.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic   b"SSEB"
//! u32     version (1)
//! u32     dim
//! u64     count
//! count × { u16 key_len, key_len bytes UTF-8 key, dim × f32 }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::SliceRef;

pub const MAGIC: &[u8; 4] = b"SSEB";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes, not an SSEB file")]
    BadMagic,
    #[error("unsupported SSEB version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading record {record}")]
    TruncatedFile { record: u64 },
    #[error("record {record} has {found} values, expected {expected}")]
    DimensionMismatch { record: u64, expected: usize, found: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("record {record} key is not valid UTF-8")]
    InvalidKey { record: u64 },
    #[error("embedding for {0:?} is all zeros")]
    ZeroVector(String),
    #[error("embedding for {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("key {0:?} appears more than once")]
    DuplicateKey(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("key {0:?} longer than 65535 bytes")]
    KeyTooLong(String),
    #[error("no embedding for {0:?}; the embedding file and manifest are out of sync")]
    MissingEmbedding(String),
}

/// Validated `volume_id/slice_index` → vector map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(EmbeddingTable { dim, entries: BTreeMap::new() })
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) -> Result<(), EmbeddingError> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                record: self.entries.len() as u64,
                expected: self.dim,
                found: vector.len(),
            });
        }
        check_vector(&key, &vector)?;
        if self.entries.contains_key(&key) {
            return Err(EmbeddingError::DuplicateKey(key));
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn lookup(&self, slice: &SliceRef) -> Result<&[f32], EmbeddingError> {
        let key = slice.key();
        self.get(&key).ok_or(EmbeddingError::MissingEmbedding(key))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, EmbeddingError> {
        let mut out = Vec::with_capacity(20 + self.entries.len() * (self.dim * 4 + 16));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (key, vector) in &self.entries {
            let len = u16::try_from(key.len()).map_err(|_| EmbeddingError::KeyTooLong(key.clone()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for v in vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_bytes()?)?;
        Ok(())
    }
}

fn check_vector(key: &str, vector: &[f32]) -> Result<(), EmbeddingError> {
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite(key.to_owned()));
    }
    if vector.iter().all(|&v| v == 0.0) {
        return Err(EmbeddingError::ZeroVector(key.to_owned()));
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    record: u64,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        if self.buf.len() < n {
            return Err(EmbeddingError::TruncatedFile { record: self.record });
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, EmbeddingError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, EmbeddingError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses and validates an SSEB v1 buffer.
pub fn parse_embeddings(bytes: &[u8]) -> Result<EmbeddingTable, EmbeddingError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    let mut cur = Cursor { buf: &bytes[4..], record: 0 };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(EmbeddingError::UnsupportedVersion(version));
    }
    let dim = cur.u32()? as usize;
    let count = cur.u64()?;
    let mut table = EmbeddingTable::new(dim)?;
    for record in 0..count {
        cur.record = record;
        let key_len = cur.u16()? as usize;
        let key =
            std::str::from_utf8(cur.take(key_len)?).map_err(|_| EmbeddingError::InvalidKey { record })?.to_owned();
        let remaining = cur.buf.len();
        if remaining < dim * 4 {
            // a short final record is a dimension error rather than a cut-off file
            if record + 1 == count && remaining.is_multiple_of(4) {
                return Err(EmbeddingError::DimensionMismatch { record, expected: dim, found: remaining / 4 });
            }
            return Err(EmbeddingError::TruncatedFile { record });
        }
        let vector: Vec<f32> =
            cur.take(dim * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        check_vector(&key, &vector)?;
        if table.entries.contains_key(&key) {
            return Err(EmbeddingError::DuplicateKey(key));
        }
        table.entries.insert(key, vector);
    }
    if !cur.buf.is_empty() {
        return Err(EmbeddingError::TrailingBytes(cur.buf.len()));
    }
    Ok(table)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    parse_embeddings(&fs::read(path)?)
}
