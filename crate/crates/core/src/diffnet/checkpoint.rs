//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//! `b"MMALIPRM"`, `u32` format version, `u32` entry count, then per entry
//! `u32` name length, UTF-8 name, `u32` rank, `u64` per dimension, and the
//! values as `f64` little-endian. Values round-trip bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MMALIPRM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_params(values: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for (name, t) in values {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8], path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format(path, "not a parameter checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("entry count")?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(path, "parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u64("dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8, &format!("values of {name} (shape {shape:?})"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.insert(name, Tensor::from_shape_vec(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last entry"));
    }
    Ok(out)
}

pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    save_values(&store.values(), path)
}

pub fn save_values(values: &BTreeMap<String, Tensor>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_params(values)).map_err(|e| Error::io(path, e))
}

pub fn load_values(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes, path)
}

/// Loads a checkpoint into a fresh store with zeroed gradients.
pub fn load_params(path: &Path) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for (name, t) in load_values(path)? {
        store.insert(name, t)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_checkpoint_rejected() {
        let mut v = BTreeMap::new();
        v.insert("a".to_string(), Tensor::vector(vec![1.0, 2.0]));
        let bytes = encode_params(&v);
        let err = decode_params(&bytes[..bytes.len() - 3], Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn round_trip_preserves_bits() {
        let mut v = BTreeMap::new();
        v.insert("w".to_string(), Tensor::from_shape_vec(vec![2], vec![-0.0, 1e-310]).unwrap());
        let back = decode_params(&encode_params(&v), Path::new("x")).unwrap();
        let a: Vec<u64> = v["w"].data().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = back["w"].data().iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }
}
