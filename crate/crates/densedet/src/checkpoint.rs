//! Versioned model checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic `DADC` | version u16 | config_len u32 | config TOML (UTF-8)
//! param_count u32
//! per parameter, in registry order:
//!   name_len u16 | name UTF-8 | frozen u8 | ndim u8 | dims u32 × ndim |
//!   values f32 × numel
//! ```
//!
//! Loading rebuilds the network from the embedded config and then fills
//! every parameter by name; a missing, extra, or reshaped parameter is a
//! format error.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::net::{Model, NetworkConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DADC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct RawParam {
    pub name: String,
    pub frozen: bool,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_checkpoint(model: &Model<f32>) -> Result<Vec<u8>> {
    let config = toml::to_string(&model.cfg)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    let params = model.parameters();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let name = p.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(p.frozen() as u8);
        out.push(p.shape().len() as u8);
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.data_vec() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                msg: format!("truncated while reading {what} at byte {}", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
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

/// Parses the container without building a model.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<(NetworkConfig, Vec<RawParam>)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format { offset: 0, msg: format!("bad magic {magic:02x?}") });
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format { offset: 4, msg: format!("unsupported version {version}") });
    }
    let config_len = r.u32("config length")? as usize;
    let config_offset = r.pos as u64;
    let config_bytes = r.take(config_len, "config")?;
    let config_text = std::str::from_utf8(config_bytes).map_err(|e| Error::Format {
        offset: config_offset + e.valid_up_to() as u64,
        msg: "config is not valid UTF-8".into(),
    })?;
    let cfg: NetworkConfig = toml::from_str(config_text).map_err(|e| Error::Format {
        offset: config_offset,
        msg: format!("embedded config: {}", e.message()),
    })?;

    let count = r.u32("parameter count")? as usize;
    let mut params = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name_offset = r.pos as u64;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Format {
                offset: name_offset,
                msg: format!("parameter {i}: name is not UTF-8"),
            })?
            .to_string();
        let frozen = match r.u8("frozen flag")? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Format {
                    offset: (r.pos - 1) as u64,
                    msg: format!("parameter {name}: frozen flag {other} is not 0/1"),
                })
            }
        };
        let ndim = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        let mut numel: u64 = 1;
        for _ in 0..ndim {
            let d = r.u32("dimension")? as usize;
            numel = numel.checked_mul(d as u64).ok_or_else(|| Error::Format {
                offset: r.pos as u64,
                msg: format!("parameter {name}: shape overflow"),
            })?;
            shape.push(d);
        }
        let payload_len = numel.checked_mul(4).ok_or_else(|| Error::Format {
            offset: r.pos as u64,
            msg: format!("parameter {name}: payload overflow"),
        })? as usize;
        let payload = r.take(payload_len, "parameter payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push(RawParam { name, frozen, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes after the last parameter", bytes.len() - r.pos),
        });
    }
    Ok((cfg, params))
}

/// Rebuilds a model from checkpoint bytes.
pub fn model_from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let (cfg, raw) = parse_checkpoint(bytes)?;
    // Seed is irrelevant: every parameter is overwritten below.
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let model = Model::new(cfg, &mut rng)?;
    let params = model.parameters();
    if params.len() != raw.len() {
        return Err(Error::Format {
            offset: 0,
            msg: format!(
                "checkpoint holds {} parameters, the configured network has {}",
                raw.len(),
                params.len()
            ),
        });
    }
    let by_name: HashMap<&str, &RawParam> = raw.iter().map(|r| (r.name.as_str(), r)).collect();
    if by_name.len() != raw.len() {
        return Err(Error::Format { offset: 0, msg: "duplicate parameter names".into() });
    }
    for p in params {
        let stored = by_name.get(p.name()).ok_or_else(|| Error::Format {
            offset: 0,
            msg: format!("checkpoint is missing parameter {}", p.name()),
        })?;
        if stored.shape != p.shape() {
            return Err(Error::Format {
                offset: 0,
                msg: format!(
                    "parameter {} has shape {:?} in the checkpoint, expected {:?}",
                    p.name(),
                    stored.shape,
                    p.shape()
                ),
            });
        }
        p.set_data(stored.data.clone());
        p.set_frozen(stored.frozen);
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>) -> Result<()> {
    Ok(std::fs::write(path, encode_checkpoint(model)?)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    model_from_bytes(&std::fs::read(path)?)
}
