//! Versioned binary container for model parameters.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "DFCLNCKP"
//! version  u32       currently 1
//! kind     u32 len + UTF-8 bytes     model family, e.g. "toy-predictor"
//! meta     u32 len + UTF-8 bytes     JSON architecture descriptor
//! count    u32                       number of named tensors
//! tensor*  u32 len + UTF-8 name, u64 n, n x f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DFCLNCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    kind: String,
    meta: String,
    tensors: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            meta: meta.into(),
            tensors: Vec::new(),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "expected a `{kind}` checkpoint, found `{}`",
                self.kind
            )))
        }
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.tensors.push((name.into(), values));
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        write_str(&mut out, &self.kind);
        write_str(&mut out, &self.meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, values) in &self.tensors {
            write_str(&mut out, name);
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a diffclean checkpoint".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let kind = read_str(r)?;
        let meta = read_str(r)?;
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(r)?;
            let mut n = [0u8; 8];
            read_exact(r, &mut n)?;
            let n = u64::from_le_bytes(n) as usize;
            if r.len() < n * 8 {
                return Err(Error::Checkpoint(format!("tensor `{name}` is truncated")));
            }
            let values = r[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            *r = &r[n * 8..];
            tensors.push((name, values));
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self {
            kind,
            meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .map_err(|e| Error::data(path, e.to_string()))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|e| Error::data(path, e.to_string()))
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of checkpoint".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut &[u8]) -> Result<String> {
    let n = read_u32(r)? as usize;
    if r.len() < n {
        return Err(Error::Checkpoint("unexpected end of checkpoint".into()));
    }
    let s = std::str::from_utf8(&r[..n])
        .map_err(|_| Error::Checkpoint("invalid UTF-8 in header".into()))?
        .to_owned();
    *r = &r[n..];
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_is_exact() {
        let mut ck = Checkpoint::new("k", "{\"a\":1}");
        ck.push_tensor("w", vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]);
        ck.push_tensor("empty", vec![]);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.tensor("w").unwrap()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_corruption() {
        let mut ck = Checkpoint::new("k", "");
        ck.push_tensor("w", vec![1.0, 2.0]);
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut future = bytes.clone();
        future[8] = 9;
        assert!(Checkpoint::from_bytes(&future).is_err());
        assert!(ck.expect_kind("other").is_err());
    }
}
