//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ZOOMCKPT"
//! version    u32
//! config     u64 length + UTF-8 bytes (JSON echo of the resolved config)
//! count      u32
//! tensor*    u32 name length + name, u32 rank, u64 dims[rank], f64 values
//! checksum   u64 FNV-1a over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Result, Tensor, TensorError};

pub const MAGIC: &[u8; 8] = b"ZOOMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: BTreeMap<String, Tensor>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| TensorError::Checkpoint(format!("corrupt file: {what}"));
        if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..8] != MAGIC {
            return Err(TensorError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32().ok_or_else(|| corrupt("truncated header"))?;
        if version != FORMAT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if stored != fnv1a(body) {
            return Err(corrupt("checksum mismatch"));
        }
        let clen = r.u64().ok_or_else(|| corrupt("truncated config"))? as usize;
        let config = String::from_utf8(r.take(clen).ok_or_else(|| corrupt("truncated config"))?.to_vec())
            .map_err(|_| corrupt("config is not UTF-8"))?;
        let count = r.u32().ok_or_else(|| corrupt("truncated tensor count"))?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let nlen = r.u32().ok_or_else(|| corrupt("truncated name"))? as usize;
            let name = String::from_utf8(r.take(nlen).ok_or_else(|| corrupt("truncated name"))?.to_vec())
                .map_err(|_| corrupt("tensor name is not UTF-8"))?;
            let rank = r.u32().ok_or_else(|| corrupt("truncated rank"))? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64().ok_or_else(|| corrupt("truncated shape"))? as usize);
            }
            let count: usize = shape.iter().product();
            let raw = r
                .take(count.checked_mul(8).ok_or_else(|| corrupt("shape overflow"))?)
                .ok_or_else(|| corrupt("truncated values"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|_| corrupt("invalid tensor shape"))?;
            tensors.insert(name, t);
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { config, tensors })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
