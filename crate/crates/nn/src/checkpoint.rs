//! Checkpoints as a JSON manifest plus a little-endian `f64` blob holding
//! every parameter in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::{Param, ParamStore};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "model.json";
pub const BLOB_FILE: &str = "model.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub init: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub params: Vec<ManifestEntry>,
    /// Model configuration, normalization statistics and anything else the
    /// caller needs to rebuild the model.
    pub meta: serde_json::Value,
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_checkpoint(dir: &Path, store: &ParamStore, meta: &serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut params = Vec::with_capacity(store.len());
    for (_, p) in store.iter() {
        params.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            trainable: p.trainable,
            init: p.init.clone(),
        });
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest { format: FORMAT_VERSION, params, meta: meta.clone() };
    write_atomic(&dir.join(BLOB_FILE), &blob)?;
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported format version {}", manifest.format)));
    }
    let blob = fs::read(dir.join(BLOB_FILE))?;
    let total: usize = manifest.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if blob.len() != total * 8 {
        return Err(NnError::Checkpoint(format!(
            "blob holds {} bytes, manifest describes {} values",
            blob.len(),
            total
        )));
    }
    let mut values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut store = ParamStore::new();
    for e in manifest.params {
        let n = e.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        let value = Tensor::new(e.shape, data)?;
        if !value.is_finite() {
            return Err(NnError::Checkpoint(format!("parameter {} holds non-finite values", e.name)));
        }
        store.push_raw(Param { name: e.name, value, trainable: e.trainable, init: e.init });
    }
    Ok((store, manifest.meta))
}

/// Copies values from `source` into `target`, matching by name and shape.
pub fn restore_into(target: &mut ParamStore, source: &ParamStore) -> Result<()> {
    if target.len() != source.len() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint has {} parameters, model expects {}",
            source.len(),
            target.len()
        )));
    }
    let ids: Vec<_> = target.ids().collect();
    for id in ids {
        let name = target.get(id).name.clone();
        let src = source
            .find(&name)
            .ok_or_else(|| NnError::Checkpoint(format!("checkpoint lacks parameter {name}")))?;
        let value = source.value(src);
        if value.shape() != target.value(id).shape() {
            return Err(NnError::Checkpoint(format!(
                "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                value.shape(),
                target.value(id).shape()
            )));
        }
        *target.value_mut(id) = value.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.add("a", Tensor::matrix(2, 2, vec![0.1, -2.5, 1e-300, 3.0]), true, "x");
        store.fixed("b", Tensor::scalar(std::f64::consts::PI), "y");
        let meta = serde_json::json!({"d_model": 8});
        save_checkpoint(dir.path(), &store, &meta).unwrap();
        let (back, meta_back) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, store);
        assert_eq!(meta_back, meta);

        let mut other = ParamStore::new();
        other.add("a", Tensor::zeros(&[2, 2]), true, "x");
        other.add("b", Tensor::zeros(&[2]), true, "x");
        assert!(restore_into(&mut other, &back).is_err());
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[3]), true, "x");
        save_checkpoint(dir.path(), &store, &serde_json::Value::Null).unwrap();
        fs::write(dir.path().join(BLOB_FILE), [0u8; 16]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(NnError::Checkpoint(_))));
    }
}
