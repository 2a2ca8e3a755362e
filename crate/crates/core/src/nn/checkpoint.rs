//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "MOBGMCKP"
//! version    u32 LE
//! kind       str      (u32 LE length + UTF-8)
//! n_meta     u32 LE,  then n_meta × (key str, value str)
//! n_tensors  u32 LE,  then n_tensors × (name str, ndims u32, dims u64 × ndims)
//! payload    every tensor's values as f64 LE, in header order
//! ```

use std::path::Path;

use super::ParamTensor;
use crate::util::sha256_hex;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MOBGMCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<ParamTensor>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self { kind: kind.into(), meta: Vec::new(), tensors: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("meta `{key}` = `{raw}` does not parse")))
    }

    pub fn tensor(&self, name: &str) -> Result<ParamTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!("expected a `{kind}` checkpoint, found `{}`", self.kind)))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = r.str()?;
        let n_meta = r.u32()?;
        let mut meta = Vec::with_capacity(n_meta as usize);
        for _ in 0..n_meta {
            meta.push((r.str()?, r.str()?));
        }
        let n_tensors = r.u32()?;
        let mut headers = Vec::with_capacity(n_tensors as usize);
        for _ in 0..n_tensors {
            let name = r.str()?;
            let ndims = r.u32()?;
            let shape = (0..ndims).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            headers.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(headers.len());
        for (name, shape) in headers {
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push(ParamTensor::from_values(name, &shape, values)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { kind, meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
