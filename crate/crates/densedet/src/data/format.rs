//! Binary feature/label file formats.
//!
//! Feature file (`.dadf`):
//!   magic `DADF` | version u16 LE | t u32 LE | d u32 LE | t·d f32 LE row-major
//!
//! Label file (`.dadl`):
//!   magic `DADL` | version u16 LE | t u32 LE | c u32 LE | t·c bytes in {0,1}
//!
//! Parsers reject bad magic, unknown versions, zero dimensions, size
//! overflow, truncated or oversized payloads, and invalid values, always
//! naming the byte offset.

use std::path::Path;

use super::{FeatureSequence, LabelGrid};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"DADF";
pub const LABEL_MAGIC: &[u8; 4] = b"DADL";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 4;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                msg: format!("truncated while reading {what} ({n} bytes needed at {})", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn parse_header(bytes: &[u8], magic: &[u8; 4]) -> Result<(usize, usize)> {
    let mut cur = Cursor::new(bytes);
    let found = cur.take(4, "magic")?;
    if found != magic {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {:02x?}, expected {:02x?}", found, magic),
        });
    }
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        });
    }
    let t = cur.u32("row count")?;
    if t == 0 {
        return Err(Error::Format { offset: 6, msg: "row count must be >= 1".into() });
    }
    let cols = cur.u32("column count")?;
    if cols == 0 {
        return Err(Error::Format { offset: 10, msg: "column count must be >= 1".into() });
    }
    Ok((t as usize, cols as usize))
}

fn check_payload_len(bytes: &[u8], t: usize, cols: usize, elem: usize) -> Result<()> {
    let expected = (t as u64)
        .checked_mul(cols as u64)
        .and_then(|n| n.checked_mul(elem as u64))
        .ok_or_else(|| Error::Format {
            offset: 6,
            msg: format!("shape {t}x{cols} overflows the payload size"),
        })?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != expected {
        return Err(Error::Format {
            offset: HEADER_LEN as u64,
            msg: format!("payload holds {actual} bytes, header implies {expected}"),
        });
    }
    Ok(())
}

/// Parses a DADF byte buffer. The video id is supplied by the caller
/// (manifests carry it; standalone reads use the file stem).
pub fn parse_features(bytes: &[u8], video_id: &str) -> Result<FeatureSequence> {
    let (t, d) = parse_header(bytes, FEATURE_MAGIC)?;
    check_payload_len(bytes, t, d, 4)?;
    let mut data = Vec::with_capacity(t * d);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::Format {
                offset: (HEADER_LEN + i * 4) as u64,
                msg: format!("non-finite feature value {v}"),
            });
        }
        data.push(v);
    }
    FeatureSequence::new(video_id, t, d, data)
}

/// Parses a DADL byte buffer.
pub fn parse_labels(bytes: &[u8]) -> Result<LabelGrid> {
    let (t, c) = parse_header(bytes, LABEL_MAGIC)?;
    check_payload_len(bytes, t, c, 1)?;
    let payload = &bytes[HEADER_LEN..];
    if let Some(i) = payload.iter().position(|b| *b > 1) {
        return Err(Error::Format {
            offset: (HEADER_LEN + i) as u64,
            msg: format!("label byte {} is not 0 or 1", payload[i]),
        });
    }
    LabelGrid::new(t, c, payload.to_vec())
}

pub fn encode_features(fs: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + fs.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(fs.t as u32).to_le_bytes());
    out.extend_from_slice(&(fs.d as u32).to_le_bytes());
    for v in &fs.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_labels(lg: &LabelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + lg.data.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(lg.t as u32).to_le_bytes());
    out.extend_from_slice(&(lg.c as u32).to_le_bytes());
    out.extend_from_slice(&lg.data);
    out
}

pub fn write_features(path: &Path, fs: &FeatureSequence) -> Result<()> {
    Ok(std::fs::write(path, encode_features(fs))?)
}

pub fn write_labels(path: &Path, lg: &LabelGrid) -> Result<()> {
    Ok(std::fs::write(path, encode_labels(lg))?)
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("video").to_string();
    parse_features(&std::fs::read(path)?, &id)
}

pub fn read_labels(path: &Path) -> Result<LabelGrid> {
    parse_labels(&std::fs::read(path)?)
}
