//! Binary feature bank files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FTBK"
//! 4       4     format version (u32, currently 1)
//! 8       4     dim (u32)
//! 12      8     count (u64)
//! 20      ...   count * dim IEEE-754 binary32 values, row-major
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::FeatureVector;

pub const MAGIC: [u8; 4] = *b"FTBK";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Dense row-major store of `count` feature rows of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureBank {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_capacity(dim, 0)
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Result<Self> {
        if dim == 0 || u32::try_from(dim).is_err() {
            return Err(Error::InvalidFeature("bank dimension must be in 1..=u32::MAX"));
        }
        Ok(FeatureBank {
            dim,
            data: Vec::with_capacity(dim * rows),
        })
    }

    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        let mut bank = Self::new(dim)?;
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        bank.data = data;
        Ok(bank)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        let start = i.checked_mul(self.dim)?;
        self.data.get(start..start + self.dim)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn push(&mut self, row: &[f32]) -> Result<usize> {
        if row.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(self.len() - 1)
    }

    /// Row `i` widened to `f64`.
    pub fn feature(&self, i: usize) -> Result<FeatureVector> {
        let row = self.row(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.len(),
        })?;
        FeatureVector::from_f32(row)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice"));
        if version != FORMAT_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4-byte slice"));
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8-byte slice"));
        let payload = &bytes[HEADER_LEN..];
        let expected = count
            .checked_mul(u64::from(dim))
            .and_then(|n| n.checked_mul(4))
            .unwrap_or(u64::MAX);
        if expected != payload.len() as u64 {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len() as u64,
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        Self::from_rows(dim as usize, data)
    }
}

pub fn read_feature_bank(path: impl AsRef<Path>) -> Result<FeatureBank> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureBank::from_bytes(&bytes)
}

pub fn write_feature_bank(bank: &FeatureBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bank.to_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
