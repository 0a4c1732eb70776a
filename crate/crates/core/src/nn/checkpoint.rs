//! Single-file tensor checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"WDNCKPT1"                 8-byte magic
//! u64 little-endian           manifest length in bytes
//! manifest                    JSON: tensor entries + free-form metadata
//! blob                        little-endian f32 values, entries back to back
//! ```
//!
//! Each manifest entry records `name`, `shape`, `dtype` (always `"f32"`) and
//! the byte `offset` of its data inside the blob.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Scalar;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WDNCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Named f32 tensors plus JSON metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, ArrayD<f32>>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every tensor of `store` under `prefix.` + name.
    pub fn put_store<T: Scalar>(&mut self, prefix: &str, store: &ParamStore<T>) {
        for (name, v) in store.iter() {
            self.tensors.insert(
                format!("{prefix}.{name}"),
                v.mapv(|x| x.to_f64_lossy() as f32),
            );
        }
    }

    /// Extracts the tensors stored under `prefix.`; the result must have the
    /// same layout as `like`.
    pub fn take_store<T: Scalar>(&self, prefix: &str, like: &ParamStore<T>) -> Result<ParamStore<T>> {
        let mut out = ParamStore::new();
        for (name, v) in like.iter() {
            let key = format!("{prefix}.{name}");
            let stored = self
                .tensors
                .get(&key)
                .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor `{key}`")))?;
            if stored.shape() != v.shape() {
                return Err(Error::Format(format!(
                    "tensor `{key}` has shape {:?}, expected {:?}",
                    stored.shape(),
                    v.shape()
                )));
            }
            out.insert(name.clone(), stored.mapv(|x| T::from_f64_lossy(f64::from(x))));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut blob = Vec::new();
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                offset: blob.len() as u64,
            });
            for v in t.iter() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: "wavedenoise-checkpoint".into(),
            tensors: entries,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + json.len() + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < len {
            return Err(Error::Format("truncated checkpoint manifest".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&body[..len])
            .map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
        let blob = &body[len..];
        let mut tensors = BTreeMap::new();
        for entry in manifest.tensors {
            if entry.dtype != "f32" {
                return Err(Error::Format(format!("unsupported dtype `{}`", entry.dtype)));
            }
            let n: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + 4 * n;
            let raw = blob
                .get(start..end)
                .ok_or_else(|| Error::Format(format!("tensor `{}` exceeds blob", entry.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), data).expect("length checked");
            tensors.insert(entry.name, arr);
        }
        Ok(Self { tensors, meta: manifest.meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
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
        let mut store = ParamStore::<f32>::new();
        store.insert("a.weight", ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.5, -0.0, 3.25, f32::MIN_POSITIVE, 7.0, -8.5]).unwrap());
        store.insert("a.bias", ArrayD::from_shape_vec(IxDyn(&[2]), vec![0.1, 0.2]).unwrap());
        let mut ck = Checkpoint::new();
        ck.put_store("net", &store);
        ck.meta = serde_json::json!({"step": 12});
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let restored = back.take_store("net", &store).unwrap();
        assert_eq!(restored, store);
    }

    #[test]
    fn rejects_garbage_and_layout_mismatch() {
        assert!(matches!(Checkpoint::from_bytes(b"nope"), Err(Error::Format(_))));
        let mut like = ParamStore::<f32>::new();
        like.insert("w", ArrayD::zeros(IxDyn(&[3])));
        let mut ck = Checkpoint::new();
        ck.tensors.insert("net.w".into(), ArrayD::zeros(IxDyn(&[4])));
        assert!(ck.take_store("net", &like).is_err());
        assert!(ck.take_store("other", &like).is_err());
    }
}
