//! `PFLD` binary field files.
//!
//! Layout (little-endian): magic `PFLD`, `u32` version, `u32` d, `d²` `i64`
//! entries of M row-major, `u32` component count D, `u32` domain flag
//! (0 space, 1 frequency), then the values in pattern (or generating-set)
//! order, point-major. Frequency files store `(re, im)` pairs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::PatternMatrix;

pub const MAGIC: &[u8; 4] = b"PFLD";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Space,
    Frequency,
}

impl Domain {
    fn flag(self) -> u32 {
        match self {
            Domain::Space => 0,
            Domain::Frequency => 1,
        }
    }

    /// Stored `f64` values per component.
    fn width(self) -> usize {
        match self {
            Domain::Space => 1,
            Domain::Frequency => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub matrix: PatternMatrix,
    pub ncomp: usize,
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl FieldFile {
    pub fn new(matrix: PatternMatrix, ncomp: usize, domain: Domain, values: Vec<f64>) -> Result<Self> {
        let expected = matrix.m() * ncomp * domain.width();
        if values.len() != expected {
            return Err(Error::Shape {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            matrix,
            ncomp,
            domain,
            values,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.matrix.dim();
        let mut out = Vec::with_capacity(24 + 8 * (d * d + self.values.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for &e in self.matrix.entries() {
            out.extend_from_slice(&e.to_le_bytes());
        }
        out.extend_from_slice(&(self.ncomp as u32).to_le_bytes());
        out.extend_from_slice(&self.domain.flag().to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing PFLD magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let d = r.u32()? as usize;
        if !(1..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        let entries = (0..d * d).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
        let matrix = PatternMatrix::new(d, entries)?;
        let ncomp = r.u32()? as usize;
        let domain = match r.u32()? {
            0 => Domain::Space,
            1 => Domain::Frequency,
            f => return Err(Error::Format(format!("unknown domain flag {f}"))),
        };
        let count = matrix
            .m()
            .checked_mul(ncomp * domain.width())
            .ok_or(Error::Overflow("field size"))?;
        if r.remaining() != count * 8 {
            return Err(Error::Format(format!(
                "expected {count} values, found {} bytes",
                r.remaining()
            )));
        }
        let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Self::new(matrix, ncomp, domain, values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
