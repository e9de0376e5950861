//! `IPTE` embedding file, little-endian:
//!
//! ```text
//! magic        4 bytes  "IPTE"
//! version      u16      1
//! dim          u32
//! class_count  u32
//! record_count u64
//! class_count × [ name_len u16, name UTF-8 bytes ]
//! record_count × [ label u32, dim × f32 ]
//! ```
//!
//! A file with no classes and no records is exactly `HEADER_LEN` bytes.

use std::fs;
use std::path::Path;

use super::{validate_record, EmbeddingRecord, EmbeddingSplit};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IPTE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

pub fn encode_split(split: &EmbeddingSplit) -> Result<Vec<u8>> {
    split.validate()?;
    let dim = u32::try_from(split.dim).map_err(|_| Error::Validation("dim exceeds u32".into()))?;
    let classes =
        u32::try_from(split.class_names.len()).map_err(|_| Error::Validation("class count exceeds u32".into()))?;

    let mut buf = Vec::with_capacity(HEADER_LEN + split.records.len() * (4 + 4 * split.dim));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&classes.to_le_bytes());
    buf.extend_from_slice(&(split.records.len() as u64).to_le_bytes());
    for name in &split.class_names {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Validation(format!("class name of {} bytes exceeds u16", name.len())))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    for r in &split.records {
        buf.extend_from_slice(&r.label.to_le_bytes());
        for v in &r.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Validates fully before touching the filesystem.
pub fn save_split(split: &EmbeddingSplit, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_split(split)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_split(path: impl AsRef<Path>) -> Result<EmbeddingSplit> {
    let bytes = fs::read(path)?;
    decode_split(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corruption(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_split(bytes: &[u8]) -> Result<EmbeddingSplit> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file too short for header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected IPTE".into()));
    }
    let mut rd = Reader { buf: bytes, pos: 4 };
    let version = rd.u16("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = rd.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::Format("dim is zero".into()));
    }
    let class_count = rd.u32("class count")? as usize;
    let record_count = rd.u64("record count")?;

    let mut class_names = Vec::with_capacity(class_count.min(1 << 16));
    for i in 0..class_count {
        let len = rd.u16("class name length")? as usize;
        let raw = rd.take(len, "class name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| Error::Format(format!("class name {i} is not UTF-8")))?;
        class_names.push(name.to_owned());
    }

    let record_len = 4 + 4 * dim;
    let expected = (record_count as u128) * (record_len as u128);
    if expected != rd.remaining() as u128 {
        return Err(Error::Corruption(format!(
            "record count {record_count} × {record_len} bytes disagrees with payload of {} bytes",
            rd.remaining()
        )));
    }

    let mut records = Vec::with_capacity(record_count as usize);
    for i in 0..record_count as usize {
        let label = rd.u32("label")?;
        let raw = rd.take(4 * dim, "vector")?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rec = EmbeddingRecord { label, vector };
        validate_record(&rec, dim, class_count, i)?;
        records.push(rec);
    }
    Ok(EmbeddingSplit { dim, class_names, records })
}
