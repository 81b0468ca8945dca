//! Named parameter store and its on-disk format.
//!
//! File layout: magic `SPOTKIT1`, a little-endian u64 header length, a JSON
//! header mapping names to shape/dtype/offset (plus the insertion order),
//! then raw little-endian values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};

use super::tensor::{numel, Tensor};

pub const PARAM_MAGIC: &[u8; 8] = b"SPOTKIT1";

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    shape: Vec<usize>,
    dtype: Dtype,
    offset: usize,
    requires_grad: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: Dtype,
    order: Vec<String>,
    params: BTreeMap<String, HeaderEntry>,
}

/// Insertion-ordered map from dotted parameter paths to tensors.
pub struct ParamStore<T: Scalar> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
        }
    }

    /// Register a new parameter; duplicate names are an error.
    pub fn register(&mut self, name: &str, t: Tensor<T>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name '{name}'"
            )));
        }
        self.entries.insert(name.to_string(), t);
        Ok(())
    }

    /// Replace an existing parameter's tensor (keeps its position).
    pub fn set(&mut self, name: &str, t: Tensor<T>) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(slot) => {
                *slot = t;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!(
                "unknown parameter '{name}'"
            ))),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter '{name}'")))
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

    /// Iterate in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Names of gradient-carrying parameters, in insertion order.
    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut order = Vec::with_capacity(self.entries.len());
        let mut params = BTreeMap::new();
        let mut offset = 0usize;
        for (name, t) in &self.entries {
            order.push(name.clone());
            params.insert(
                name.clone(),
                HeaderEntry {
                    shape: t.shape().to_vec(),
                    dtype: T::DTYPE,
                    offset,
                    requires_grad: t.requires_grad(),
                },
            );
            offset += t.numel() * T::DTYPE.size_bytes();
        }
        let header = Header {
            dtype: T::DTYPE,
            order,
            params,
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + 8 + header_json.len() + offset);
        out.extend_from_slice(PARAM_MAGIC);
        out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_json);
        for t in self.entries.values() {
            for v in t.values() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_bytes(bytes: &[u8], path_for_errors: &str) -> Result<Self> {
        let fmt_err = |detail: &str| Error::Format {
            path: path_for_errors.to_string(),
            detail: detail.to_string(),
        };
        if bytes.len() < 16 || &bytes[0..8] != PARAM_MAGIC {
            return Err(fmt_err("missing SPOTKIT1 magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + header_len {
            return Err(fmt_err("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
            .map_err(|e| fmt_err(&format!("bad header JSON: {e}")))?;
        if header.dtype != T::DTYPE {
            return Err(fmt_err(&format!(
                "file dtype {} does not match requested {}",
                header.dtype.name(),
                T::DTYPE.name()
            )));
        }
        let data = &bytes[16 + header_len..];
        let elem = T::DTYPE.size_bytes();
        let mut store = ParamStore::new();
        for name in &header.order {
            let entry = header
                .params
                .get(name)
                .ok_or_else(|| fmt_err(&format!("order lists unknown param '{name}'")))?;
            let n = numel(&entry.shape);
            let end = entry.offset + n * elem;
            if end > data.len() {
                return Err(fmt_err(&format!("param '{name}' exceeds data section")));
            }
            let mut values = Vec::with_capacity(n);
            for i in 0..n {
                let at = entry.offset + i * elem;
                values.push(T::read_le(&data[at..at + elem]));
            }
            store.register(
                name,
                Tensor::new(values, entry.shape.clone(), entry.requires_grad),
            )?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

/// Read only the dtype tag from a parameter file.
pub fn peek_dtype(path: &Path) -> Result<Dtype> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 16 || &bytes[0..8] != PARAM_MAGIC {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: "missing SPOTKIT1 magic".to_string(),
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len.min(bytes.len() - 16)])?;
    Ok(header.dtype)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_order_and_values() {
        let mut store = ParamStore::<f32>::new();
        store
            .register("zeta.w", Tensor::param(vec![1.0, 2.0], vec![2]))
            .unwrap();
        store
            .register("alpha.b", Tensor::constant(vec![3.0], vec![1]))
            .unwrap();
        let bytes = store.to_bytes();
        assert_eq!(&bytes[0..8], PARAM_MAGIC);
        let loaded = ParamStore::<f32>::from_bytes(&bytes, "mem").unwrap();
        let names: Vec<&str> = loaded.iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["zeta.w", "alpha.b"]); // insertion order, not sorted
        assert_eq!(loaded.get("zeta.w").unwrap().values(), &[1.0, 2.0]);
        assert!(loaded.get("zeta.w").unwrap().requires_grad());
        assert!(!loaded.get("alpha.b").unwrap().requires_grad());
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.register("w", Tensor::zeros(vec![1])).unwrap();
        assert!(store.register("w", Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn serialization_is_deterministic() {
        let build = || {
            let mut s = ParamStore::<f64>::new();
            s.register("b", Tensor::param(vec![0.25; 3], vec![3])).unwrap();
            s.register("a", Tensor::param(vec![-1.5; 2], vec![2])).unwrap();
            s.to_bytes()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.register("w", Tensor::zeros(vec![2])).unwrap();
        let bytes = store.to_bytes();
        assert!(ParamStore::<f64>::from_bytes(&bytes, "mem").is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        match ParamStore::<f32>::from_bytes(b"NOTMAGIC00000000", "mem") {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {:?}", other.err()),
        }
    }
}
