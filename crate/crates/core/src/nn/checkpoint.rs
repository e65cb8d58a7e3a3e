//! Binary weight file.
//!
//! Layout, little-endian throughout:
//! `b"CGFW1"`, `u64` Adam step, `u32` tensor count; per tensor `u32` name
//! length, UTF-8 name, `u32` rank, `u64` dims, `f64` payload; then per
//! tensor the first and second Adam moments as `f64`; then `u32` length and
//! a JSON metadata block.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;
use crate::nn::params::ParamStore;

pub const MAGIC: &[u8; 5] = b"CGFW1";

pub fn to_bytes(store: &ParamStore, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&store.step().to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for t in store.tensors() {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(t.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.value.cols() as u64).to_le_bytes());
        for v in t.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for t in store.tensors() {
        for v in t.m.iter().chain(&t.v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = serde_json::to_vec(meta)?;
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<(ParamStore, serde_json::Value)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let (rows, cols) = match dims[..] {
            [n] => (1, n),
            [a, b] => (a, b),
            _ => return Err(Error::Format(format!("tensor `{name}` has unsupported rank {rank}"))),
        };
        let data = r.f64s(rows * cols)?;
        store.add(&name, Matrix::new(rows, cols, data)?).map_err(|e| Error::Format(e.to_string()))?;
    }
    for t in store.tensors_mut() {
        let n = t.value.data().len();
        t.m = r.f64s(n)?;
        t.v = r.f64s(n)?;
    }
    store.set_step(step);
    let len = r.u32()? as usize;
    let meta = serde_json::from_slice(r.take(len)?)?;
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok((store, meta))
}

pub fn save(store: &ParamStore, meta: &serde_json::Value, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(store, meta)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let buf = std::fs::read(path).map_err(|source| Error::MissingFile { path: path.display().to_string(), source })?;
    from_bytes(&buf)
}
