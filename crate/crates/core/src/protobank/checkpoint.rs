//! `IPTB` bank checkpoint, little-endian:
//!
//! ```text
//! magic "IPTB", version u16, dim u32, class_count u32, n_e u32
//! class_count × [ class_id u32, birth_phase u32, flags u8,
//!                 dim × f64 category, n_e × dim × f64 examples ]
//! ```
//!
//! `flags` bit 0 marks frozen example prototypes, bit 1 a frozen category
//! prototype. Vectors are stored as f64 so a reload is bit-exact.

use std::fs;
use std::path::Path;

use super::{ClassPrototypes, PrototypeBank};
use crate::error::{Error, Result};

pub const BANK_MAGIC: &[u8; 4] = b"IPTB";
pub const BANK_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;

const FLAG_EXAMPLES_FROZEN: u8 = 1;
const FLAG_CATEGORY_FROZEN: u8 = 2;

pub fn encode_bank(bank: &PrototypeBank) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(BANK_MAGIC);
    buf.extend_from_slice(&BANK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(bank.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(bank.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(bank.n_e() as u32).to_le_bytes());
    for c in bank.classes() {
        buf.extend_from_slice(&c.class_id.to_le_bytes());
        buf.extend_from_slice(&(c.birth_phase as u32).to_le_bytes());
        let mut flags = 0u8;
        if c.examples_frozen {
            flags |= FLAG_EXAMPLES_FROZEN;
        }
        if c.category_frozen {
            flags |= FLAG_CATEGORY_FROZEN;
        }
        buf.push(flags);
        for v in std::iter::once(&c.category).chain(&c.examples) {
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    buf
}

pub fn decode_bank(bytes: &[u8]) -> Result<PrototypeBank> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("checkpoint too short for header".into()));
    }
    if &bytes[..4] != BANK_MAGIC {
        return Err(Error::Format("bad magic, expected IPTB".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let version = u16_at(4);
    if version != BANK_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let dim = u32_at(6);
    let count = u32_at(10);
    let n_e = u32_at(14);
    let vec_bytes = dim * 8;
    let class_bytes = 4 + 4 + 1 + vec_bytes * (1 + n_e);
    if bytes.len() - HEADER_LEN != count * class_bytes {
        return Err(Error::Corruption(format!(
            "{count} classes of {class_bytes} bytes disagree with payload of {} bytes",
            bytes.len() - HEADER_LEN
        )));
    }
    let read_vec = |o: usize| -> Vec<f64> {
        bytes[o..o + vec_bytes].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    };
    let mut classes = Vec::with_capacity(count);
    for i in 0..count {
        let o = HEADER_LEN + i * class_bytes;
        let flags = bytes[o + 8];
        if flags & !(FLAG_EXAMPLES_FROZEN | FLAG_CATEGORY_FROZEN) != 0 {
            return Err(Error::Corruption(format!("class {i}: unknown flag bits {flags:#x}")));
        }
        let base = o + 9;
        classes.push(ClassPrototypes {
            class_id: u32_at(o) as u32,
            birth_phase: u32_at(o + 4),
            examples_frozen: flags & FLAG_EXAMPLES_FROZEN != 0,
            category_frozen: flags & FLAG_CATEGORY_FROZEN != 0,
            category: read_vec(base),
            examples: (0..n_e).map(|j| read_vec(base + (1 + j) * vec_bytes)).collect(),
        });
    }
    PrototypeBank::from_parts(dim, n_e, classes)
}

pub fn save_bank(bank: &PrototypeBank, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_bank(bank))?;
    Ok(())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<PrototypeBank> {
    decode_bank(&fs::read(path)?)
}
