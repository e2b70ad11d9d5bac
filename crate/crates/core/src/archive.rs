//! Binary tensor archive for frozen parameters.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic    8 bytes  "HCOTTNSR"
//! version  u32      1
//! count    u32      number of entries
//! entry*   name_len u32, name utf-8, rank u32, dims u64*rank, data f64*prod(dims)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"HCOTTNSR";
const VERSION: u32 = 1;

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = tensor;
        } else {
            self.entries.push((name, tensor));
        }
    }

    pub fn insert_vec(&mut self, name: impl Into<String>, v: &[f64]) {
        let t = Tensor::new(vec![v.len().max(1)], if v.is_empty() { vec![0.0] } else { v.to_vec() })
            .expect("finite parameters");
        self.insert(name, t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Archive(format!("missing entry {name:?}")))
    }

    pub fn get_vec(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.data().to_vec())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Archive("unexpected end of archive".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err(Error::Archive("bad magic".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(Error::Archive(format!("unsupported version {version}")));
        }
        let count = u32_at(take(4)?) as usize;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let name_len = u32_at(take(4)?) as usize;
            let name = std::str::from_utf8(take(name_len)?)
                .map_err(|_| Error::Archive("entry name is not utf-8".into()))?
                .to_string();
            let rank = u32_at(take(4)?) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
            }
            let n: usize = shape.iter().product();
            let raw = take(n.checked_mul(8).ok_or_else(|| Error::Archive("entry too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            archive.insert(name, Tensor::new(shape, data).map_err(|e| Error::Archive(e.to_string()))?);
        }
        if !cur.is_empty() {
            return Err(Error::Archive("trailing bytes after last entry".into()));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(&mut f).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let mut a = TensorArchive::new();
        a.insert("w", Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 1e-300, 7.0]).unwrap());
        a.insert_vec("b", &[0.25, 0.5]);
        let back = TensorArchive::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.names().collect::<Vec<_>>(), vec!["w", "b"]);
    }

    #[test]
    fn rejects_corruption() {
        let mut a = TensorArchive::new();
        a.insert_vec("b", &[1.0, 2.0]);
        let bytes = a.to_bytes();
        assert!(TensorArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TensorArchive::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(TensorArchive::from_bytes(&extra).is_err());
    }
}
