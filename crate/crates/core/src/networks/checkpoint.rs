//! Binary weight checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  b"CSCKPT\0\x01"
//! count      u32      number of parameters
//! repeated `count` times, in store order:
//!   name_len u32
//!   name     name_len bytes, UTF-8 canonical parameter name
//!   group    u8       0 = weight, 1 = architecture
//!   ndim     u32
//!   extents  ndim × u64
//!   values   product(extents) × f64 (IEEE-754 little-endian)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CSCKPT\0\x01";

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(match p.group {
            ParamGroup::Weight => 0,
            ParamGroup::Arch => 1,
        });
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint(format!("non-UTF-8 name at byte {}", r.pos)))?
            .to_string();
        let group = match r.take(1)?[0] {
            0 => ParamGroup::Weight,
            1 => ParamGroup::Arch,
            g => return Err(Error::Checkpoint(format!("unknown group {g} for {name}"))),
        };
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("oversized tensor".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        store.add(name, group, value);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode(store))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore> {
    decode(&fs::read(path)?)
}

/// Overwrites `target`'s values with a checkpoint holding exactly the same
/// parameter names and shapes.
pub fn restore_into(target: &mut ParamStore, saved: &ParamStore) -> Result<()> {
    if target.len() != saved.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, network has {}",
            saved.len(),
            target.len()
        )));
    }
    let copied = target.copy_matching(saved)?;
    if copied != target.len() {
        return Err(Error::Checkpoint("checkpoint parameter names do not match the network".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            values in prop::collection::vec(prop::num::f64::ANY, 1..40),
            arch in any::<bool>(),
        ) {
            let mut store = ParamStore::new();
            let group = if arch { ParamGroup::Arch } else { ParamGroup::Weight };
            store.add("cells.0.slot1.conv3x3.weight", group, Tensor::from_vec(values.clone()));
            store.add("head.bias", ParamGroup::Weight, Tensor::scalar(0.25));
            let decoded = decode(&encode(&store)).unwrap();
            prop_assert_eq!(decoded.len(), 2);
            let (_, p) = decoded.iter().next().unwrap();
            prop_assert_eq!(p.group, group);
            let bits: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
            let expected: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, expected);
        }
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut store = ParamStore::new();
        store.add("w", ParamGroup::Weight, Tensor::from_vec(vec![1.0, 2.0]));
        let bytes = encode(&store);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"NOTACKPT").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
