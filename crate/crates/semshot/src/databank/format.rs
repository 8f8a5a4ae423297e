//! Feature bank binary format (little-endian):
//!
//! ```text
//! magic "FBNK" (4) · version u16 = 1 · d_v u32 · n_classes u32
//! per class: name_len u16 · UTF-8 name · split u8 · n_samples u32
//!            · n_samples·d_v f32 values, row-major
//! ```
//!
//! File size = 14 + Σ_c (7 + name_len_c + 4·n_samples_c·d_v).

use std::fs;
use std::path::Path;

use super::{BankError, ClassRecord, FeatureBank, Split};

pub const MAGIC: &[u8; 4] = b"FBNK";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 14;

pub fn encode_bank(bank: &FeatureBank) -> Result<Vec<u8>, BankError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(bank.d_v() as u32).to_le_bytes());
    out.extend_from_slice(&(bank.n_classes() as u32).to_le_bytes());
    for c in bank.classes() {
        let name = c.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(BankError::Validation(format!(
                "class name too long ({} bytes)",
                name.len()
            )));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(c.split.tag());
        out.extend_from_slice(&(c.n_samples() as u32).to_le_bytes());
        for v in c.raw_features() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_bank(bank: &FeatureBank, path: &Path) -> Result<(), BankError> {
    let bytes = encode_bank(bank)?;
    fs::write(path, bytes)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], BankError> {
        if self.offset + n > self.bytes.len() {
            return Err(BankError::Corrupt {
                offset: self.offset,
                detail: format!(
                    "truncated while reading {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, BankError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, BankError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_bank(bytes: &[u8]) -> Result<FeatureBank, BankError> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(BankError::Format(format!(
            "bad magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(BankError::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let d_v = r.u32("d_v")? as usize;
    if d_v == 0 {
        return Err(BankError::Format("d_v must be positive".into()));
    }
    let n_classes = r.u32("n_classes")? as usize;
    // each class record is at least 7 bytes (name_len + split tag +
    // n_samples); reject impossible counts before allocating for them
    let remaining = bytes.len() - r.offset;
    if n_classes > remaining / 7 {
        return Err(BankError::Corrupt {
            offset: r.offset,
            detail: format!("{n_classes} classes cannot fit in {remaining} remaining bytes"),
        });
    }

    let mut classes = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let name_len = r.u16("name_len")? as usize;
        let name_offset = r.offset;
        let name = std::str::from_utf8(r.take(name_len, "class name")?)
            .map_err(|e| BankError::Corrupt {
                offset: name_offset,
                detail: format!("class name is not UTF-8: {e}"),
            })?
            .to_owned();
        let tag_offset = r.offset;
        let tag = r.take(1, "split tag")?[0];
        let split = Split::from_tag(tag).ok_or(BankError::Corrupt {
            offset: tag_offset,
            detail: format!("unknown split tag {tag}"),
        })?;
        let n_samples = r.u32("n_samples")? as usize;
        let payload_len = n_samples
            .checked_mul(d_v)
            .and_then(|n| n.checked_mul(4))
            .ok_or(BankError::Corrupt {
                offset: r.offset,
                detail: format!("feature payload size overflows: {n_samples} x {d_v}"),
            })?;
        let payload = r.take(payload_len, "feature payload")?;
        let features: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        classes.push(ClassRecord::new(name, split, features, d_v)?);
    }
    if r.offset != bytes.len() {
        return Err(BankError::Corrupt {
            offset: r.offset,
            detail: format!("{} trailing bytes after last class", bytes.len() - r.offset),
        });
    }
    FeatureBank::new(d_v, classes)
}

pub fn load_bank(path: &Path) -> Result<FeatureBank, BankError> {
    let bytes = fs::read(path)?;
    decode_bank(&bytes)
}
