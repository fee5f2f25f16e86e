//! Flat binary archive of named tensors and text blobs.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"MCRFARC1"
//! u32    entry count
//! entry  u8 kind (0 = text, 1 = tensor), u32 name length, name bytes, then
//!        text:   u64 byte length, UTF-8 bytes
//!        tensor: u32 rank, rank × u64 dims, numel × f64 payload
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"MCRFARC1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub texts: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_params(store: &ParamStore) -> Self {
        Archive {
            texts: BTreeMap::new(),
            tensors: store
                .iter()
                .map(|(_, p)| (p.name().to_string(), p.value().clone()))
                .collect(),
        }
    }

    /// Copies every stored tensor into the same-named parameter of `store`.
    /// Missing or extra names and shape changes are checkpoint errors.
    pub fn load_params(&self, store: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "archive has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, t) in &self.tensors {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            store
                .set_value(id, t.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&((self.texts.len() + self.tensors.len()) as u32).to_le_bytes());
        for (name, text) in &self.texts {
            out.push(0);
            put_name(&mut out, name);
            out.extend_from_slice(&(text.len() as u64).to_le_bytes());
            out.extend_from_slice(text.as_bytes());
        }
        for (name, t) in &self.tensors {
            out.push(1);
            put_name(&mut out, name);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let count = r.u32()?;
        let mut archive = Archive::new();
        for _ in 0..count {
            let kind = r.take(1)?[0];
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            match kind {
                0 => {
                    let len = r.u64()? as usize;
                    let text = String::from_utf8(r.take(len)?.to_vec())
                        .map_err(|_| Error::Checkpoint(format!("text `{name}` is not UTF-8")))?;
                    archive.texts.insert(name, text);
                }
                1 => {
                    let rank = r.u32()? as usize;
                    let shape = (0..rank)
                        .map(|_| r.u64().map(|d| d as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let n: usize = shape.iter().product();
                    if n.checked_mul(8).map_or(true, |b| b > bytes.len()) {
                        return Err(Error::Checkpoint(format!("tensor `{name}` is truncated")));
                    }
                    let payload = r.take(n * 8)?;
                    let data = payload
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect();
                    let t = Tensor::new(shape, data)
                        .map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
                    archive.tensors.push((name, t));
                }
                k => return Err(Error::Checkpoint(format!("unknown entry kind {k}"))),
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
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
            .ok_or_else(|| Error::Checkpoint("unexpected end of archive".into()))?;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut store = ParamStore::new();
        store
            .add("a", Tensor::new(vec![2, 2], vec![1.5, -0.0, f64::MIN_POSITIVE, 3.0]).unwrap())
            .unwrap();
        store.add("b.bias", Tensor::vector(vec![0.1])).unwrap();
        let mut a = Archive::from_params(&store);
        a.texts.insert("manifest".into(), "variant=TIg\n".into());
        let back = Archive::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(back, a);
        let bits: Vec<u64> = back.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
        let orig: Vec<u64> = a.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, orig);
    }

    #[test]
    fn corrupt_bytes_are_checkpoint_errors() {
        assert!(matches!(Archive::from_bytes(b"nonsense"), Err(Error::Checkpoint(_))));
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[3])).unwrap();
        let bytes = Archive::from_params(&store).to_bytes();
        assert!(matches!(
            Archive::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn load_params_checks_names() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[3])).unwrap();
        let mut other = ParamStore::new();
        other.add("b", Tensor::zeros(&[3])).unwrap();
        let a = Archive::from_params(&store);
        assert!(a.load_params(&mut other).is_err());
    }
}
