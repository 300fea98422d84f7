//! Named parameter store and its binary container format.
//!
//! The container layout (all integers little-endian):
//!
//! ```text
//! magic  b"LFFN"
//! u32    format version (currently 1)
//! u32    entry count
//! entry* name_len: u16, name: UTF-8 bytes,
//!        rank: u8, extents: u32 × rank,
//!        payload: f32 × Π extents
//! ```
//!
//! Writes always emit rank 4 (the native NCHW shape). Reads accept ranks
//! 1–4, mapping shorter shapes onto NCHW as (1,C,1,1), (N,C,1,1) and
//! (1,C,H,W) respectively. A store round-trips through the container
//! byte-exactly: entry order is preserved and payloads are raw IEEE bits.

use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::tensor::{Shape, TensorBase};

const MAGIC: &[u8; 4] = b"LFFN";
const VERSION: u32 = 1;

/// Ordered map from parameter name to tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStoreBase<T: Scalar> {
    entries: IndexMap<String, TensorBase<T>>,
}

impl<T: Scalar> Default for WeightStoreBase<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> WeightStoreBase<T> {
    pub fn new() -> Self {
        WeightStoreBase { entries: IndexMap::new() }
    }

    /// Adds a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: TensorBase<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Container(format!("duplicate parameter name {name:?}")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&TensorBase<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Container(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut TensorBase<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Container(format!("missing parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorBase<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut TensorBase<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalar parameters across all entries.
    pub fn total_params(&self) -> u64 {
        self.entries.values().map(|t| t.numel() as u64).sum()
    }

    /// Element-wise conversion to another scalar type (e.g. the float64
    /// shadow stores used by the finite-difference checks).
    pub fn cast<U: Scalar>(&self) -> WeightStoreBase<U> {
        let mut out = WeightStoreBase::new();
        for (name, tensor) in &self.entries {
            out.entries.insert(name.clone(), tensor.cast::<U>());
        }
        out
    }
}

impl WeightStoreBase<f32> {
    /// Serializes to the container format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.entries.len())
            .map_err(|_| Error::Container("too many entries".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, tensor) in &self.entries {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Container(format!("parameter name too long: {name:?}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(4u8);
            let s = tensor.shape();
            for extent in [s.n, s.c, s.h, s.w] {
                let e = u32::try_from(extent)
                    .map_err(|_| Error::Container(format!("extent too large in {name:?}")))?;
                out.extend_from_slice(&e.to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses the container format.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Container("bad magic; not a weight container".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Container(format!(
                "unsupported container version {version} (expected {VERSION})"
            )));
        }
        let count = r.u32()?;
        let mut store = WeightStoreBase::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Container("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()?;
            if !(1..=4).contains(&rank) {
                return Err(Error::Container(format!("unsupported rank {rank} for {name:?}")));
            }
            let mut extents = [1usize; 4];
            for slot in extents.iter_mut().take(rank as usize) {
                let e = r.u32()? as usize;
                if e == 0 {
                    return Err(Error::Container(format!("zero extent in {name:?}")));
                }
                *slot = e;
            }
            let shape = match rank {
                1 => Shape::new(1, extents[0], 1, 1),
                2 => Shape::new(extents[0], extents[1], 1, 1),
                3 => Shape::new(1, extents[0], extents[1], extents[2]),
                _ => Shape::new(extents[0], extents[1], extents[2], extents[3]),
            };
            let numel = shape.numel();
            if numel > bytes.len() / 4 + 1 {
                return Err(Error::Container(format!("payload of {name:?} exceeds file size")));
            }
            let payload = r.take(numel * 4)?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(name, TensorBase::from_vec(shape, data)?)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Container(format!(
                "{} trailing bytes after last entry",
                bytes.len() - r.pos
            )));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Container("container truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::OracleRng;

    fn sample_store() -> WeightStoreBase<f32> {
        let mut rng = OracleRng::new(99);
        let mut store = WeightStoreBase::new();
        store
            .insert("head.weight", rng.tensor(Shape::new(4, 3, 3, 3), -1.0, 1.0))
            .unwrap();
        store
            .insert("head.bias", rng.tensor(Shape::new(1, 4, 1, 1), -1.0, 1.0))
            .unwrap();
        store
            .insert("module.0.fuse.weight", rng.tensor(Shape::new(4, 8, 1, 1), -1.0, 1.0))
            .unwrap();
        store
    }

    #[test]
    fn container_roundtrip_is_byte_exact() {
        let store = sample_store();
        let bytes = store.to_bytes().unwrap();
        let again = WeightStoreBase::from_bytes(&bytes).unwrap();
        assert_eq!(store, again);
        assert_eq!(bytes, again.to_bytes().unwrap());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = WeightStoreBase::<f32>::new();
        store.insert("p", TensorBase::scalar(1.0)).unwrap();
        assert!(store.insert("p", TensorBase::scalar(2.0)).is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = sample_store().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(WeightStoreBase::from_bytes(&bytes).is_err());
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = sample_store().to_bytes().unwrap();
        assert!(WeightStoreBase::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = sample_store().to_bytes().unwrap();
        bytes.push(0);
        assert!(WeightStoreBase::from_bytes(&bytes).is_err());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = sample_store().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(WeightStoreBase::from_bytes(&bytes).is_err());
    }

    #[test]
    fn total_params_counts_elements() {
        let store = sample_store();
        assert_eq!(store.total_params(), (4 * 3 * 3 * 3 + 4 + 4 * 8) as u64);
    }

    #[test]
    fn cast_roundtrip_preserves_f32_values() {
        let store = sample_store();
        let back = store.cast::<f64>().cast::<f32>();
        assert_eq!(store, back);
    }
}
