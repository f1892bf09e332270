//! ECGM checkpoint container.
//!
//! ```text
//! "ECGM" | version u32 | config length u32 | config JSON
//! tensor count u32 | per tensor: name length u32, UTF-8 name, rank u32, dims u64 x rank, f64 values
//! ```
//! All integers and floats are little-endian. Parameters come first in network order,
//! followed by each norm layer's running mean and variance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ecg_unc_autodiff::Tensor;
use thiserror::Error;

use super::{NetError, Network, NetworkConfig};
use crate::seed::rng_from_seed;

const MAGIC: &[u8; 4] = b"ECGM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?} at offset 0, expected \"ECGM\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint at offset {offset} while reading {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("malformed checkpoint at offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error("checkpoint config is invalid: {0}")]
    Config(#[from] NetError),
    #[error("tensor {name}: stored shape {stored:?} does not match network shape {expected:?}")]
    ShapeMismatch {
        name: String,
        stored: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("tensor {0} missing from checkpoint")]
    Missing(String),
    #[error("checkpoint holds unknown tensor {0}")]
    Unknown(String),
    #[error("checkpoint config does not match: {0}")]
    ConfigMismatch(String),
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), CheckpointError> {
    let v = u32::try_from(v).map_err(|_| CheckpointError::Malformed {
        offset: out.len() as u64,
        reason: format!("value {v} exceeds u32"),
    })?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) -> Result<(), CheckpointError> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Serializes the network to ECGM bytes.
pub fn write_checkpoint<W: Write>(net: &Network, mut writer: W) -> Result<(), CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config = serde_json::to_vec(net.config()).map_err(|e| CheckpointError::Malformed {
        offset: 8,
        reason: e.to_string(),
    })?;
    put_u32(&mut out, config.len())?;
    out.extend_from_slice(&config);
    put_u32(&mut out, net.parameters().len() + 2 * net.buffers().len())?;
    for p in net.parameters() {
        put_tensor(&mut out, &p.name, p.value.shape(), p.value.values())?;
    }
    for b in net.buffers() {
        let c = b.stats.channels();
        put_tensor(&mut out, &format!("{}.running_mean", b.name), &[c], &b.stats.mean)?;
        put_tensor(&mut out, &format!("{}.running_var", b.name), &[c], &b.stats.var)?;
    }
    writer.write_all(&out)?;
    writer.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated {
            offset: self.pos as u64,
            what,
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn malformed(&self, reason: impl Into<String>) -> CheckpointError {
        CheckpointError::Malformed {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }
}

/// Parses ECGM bytes back into a network.
pub fn read_checkpoint<R: Read>(mut reader: R) -> Result<Network, CheckpointError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: magic.try_into().expect("4 bytes"),
        });
    }
    let version = cur.u32("version")? as u32;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let len = cur.u32("config length")?;
    let raw = cur.take(len, "config")?;
    let config: NetworkConfig = serde_json::from_slice(raw).map_err(|e| cur.malformed(format!("config JSON: {e}")))?;
    let mut net = Network::build(config, &mut rng_from_seed(0))?;

    let count = cur.u32("tensor count")?;
    let mut stored: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32("name length")?;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| cur.malformed("tensor name is not UTF-8"))?
            .to_string();
        let rank = cur.u32("rank")?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(usize::try_from(cur.u64("dimension")?).map_err(|_| cur.malformed("dimension overflow"))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8).map(|_| n))
            .ok_or_else(|| cur.malformed("tensor size overflow"))?;
        let raw = cur.take(numel * 8, "tensor values")?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if stored.insert(name.clone(), (shape, values)).is_some() {
            return Err(cur.malformed(format!("duplicate tensor {name}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.malformed("trailing bytes"));
    }

    let mut take = |name: &str, expected: &[usize]| -> Result<Vec<f64>, CheckpointError> {
        let (shape, values) = stored
            .remove(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if shape != expected {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                stored: shape,
                expected: expected.to_vec(),
            });
        }
        Ok(values)
    };
    for p in net.parameters_mut() {
        let values = take(&p.name, p.value.shape())?;
        p.value = Tensor::new(p.value.shape().to_vec(), values).expect("shape checked");
    }
    for b in net.buffers_mut() {
        let c = [b.stats.channels()];
        b.stats.mean = take(&format!("{}.running_mean", b.name), &c)?;
        b.stats.var = take(&format!("{}.running_var", b.name), &c)?;
    }
    if let Some(name) = stored.into_keys().min() {
        return Err(CheckpointError::Unknown(name));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<(), CheckpointError> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<Network, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
