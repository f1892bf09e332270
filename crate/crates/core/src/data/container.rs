//! ECGD container: `"ECGD" | version u32 | count u64`, then per record
//! `id_len u16 | id UTF-8 | label u8 | leads u16 | length u32 | f32 x leads*length`,
//! everything little-endian and lead-major.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Dataset, EcgRecord};

const MAGIC: &[u8; 4] = b"ECGD";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at offset 0: found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported dataset version {found} at offset 4 (expected {VERSION})")]
    Version { found: u32 },
    #[error("truncated dataset at offset {offset}: expected {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("malformed dataset at offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error("record {id}: {reason}")]
    Unencodable { id: String, reason: String },
    #[error("invalid synthesis config: {0}")]
    InvalidSynthConfig(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut writer: W) -> Result<(), DataError> {
    writer.write_all(MAGIC)?;
    writer.write_all(&VERSION.to_le_bytes())?;
    writer.write_all(&(dataset.len() as u64).to_le_bytes())?;
    for r in &dataset.records {
        let bad = |reason: &str| DataError::Unencodable {
            id: r.id.clone(),
            reason: reason.to_string(),
        };
        let id_len = u16::try_from(r.id.len()).map_err(|_| bad("id longer than 65535 bytes"))?;
        let leads = u16::try_from(r.lead_count()).map_err(|_| bad("too many leads"))?;
        let len = u32::try_from(r.len()).map_err(|_| bad("record too long"))?;
        writer.write_all(&id_len.to_le_bytes())?;
        writer.write_all(r.id.as_bytes())?;
        writer.write_all(&[r.label])?;
        writer.write_all(&leads.to_le_bytes())?;
        writer.write_all(&len.to_le_bytes())?;
        let mut buf = Vec::with_capacity(r.samples().len() * 4);
        for v in r.samples() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        writer.write_all(&buf)?;
    }
    writer.flush()?;
    Ok(())
}

struct Source<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Source<R> {
    fn fill(&mut self, buf: &mut [u8], what: &'static str) -> Result<(), DataError> {
        let mut read = 0;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => {
                    return Err(DataError::Truncated {
                        offset: self.offset + read as u64,
                        what,
                    })
                }
                Ok(n) => read += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], DataError> {
        let mut b = [0u8; N];
        self.fill(&mut b, what)?;
        Ok(b)
    }
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, DataError> {
    let mut src = Source {
        inner: reader,
        offset: 0,
    };
    let magic = src.array::<4>("magic")?;
    if &magic != MAGIC {
        return Err(DataError::BadMagic { found: magic.to_vec() });
    }
    let version = u32::from_le_bytes(src.array("version")?);
    if version != VERSION {
        return Err(DataError::Version { found: version });
    }
    let count = u64::from_le_bytes(src.array("record count")?);
    let mut records = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let start = src.offset;
        let id_len = u16::from_le_bytes(src.array("id length")?) as usize;
        let mut id = vec![0u8; id_len];
        src.fill(&mut id, "record id")?;
        let id = String::from_utf8(id).map_err(|_| DataError::Malformed {
            offset: start + 2,
            reason: "record id is not UTF-8".into(),
        })?;
        let [label] = src.array::<1>("label")?;
        let leads = u16::from_le_bytes(src.array("lead count")?) as usize;
        let len = u32::from_le_bytes(src.array("record length")?) as usize;
        if leads == 0 {
            return Err(DataError::Malformed {
                offset: src.offset - 6,
                reason: format!("record {id} has zero leads"),
            });
        }
        let mut raw = vec![0u8; leads * len * 4];
        src.fill(&mut raw, "sample values")?;
        let samples = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        records.push(EcgRecord::new(id, label, leads, samples).expect("length is leads * len"));
    }
    let mut tail = [0u8; 1];
    if src.inner.read(&mut tail)? != 0 {
        return Err(DataError::Malformed {
            offset: src.offset,
            reason: "trailing bytes after last record".into(),
        });
    }
    Ok(Dataset { records })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// `id,label,length` listing for inspection.
pub fn write_manifest_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "label", "length"])?;
    for r in &dataset.records {
        w.write_record([r.id.clone(), r.label.to_string(), r.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
