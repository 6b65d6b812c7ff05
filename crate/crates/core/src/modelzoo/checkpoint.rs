//! Self-describing checkpoints: a safetensors archive whose header metadata
//! carries the format tag, version, model spec and training metadata.
//!
//! Tensor names are prefixed: `model.` for weights and buffers, and any other
//! prefix (`optim.`, `mask.`, ...) for auxiliary training state.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use super::{build_model, tensor_bytes, Model, ModelSpec};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "onedatum-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_PREFIX: &str = "model.";

/// Training metadata stored next to the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// What produced the checkpoint: `teacher`, `student`, `compressed`, ...
    pub role: String,
    pub epoch: u64,
    pub step: u64,
    pub val_top1: Option<f64>,
    pub seed: u64,
    /// Free-form extras (quantization scales, dataset hashes, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// A loaded checkpoint.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
    /// Auxiliary tensors keyed by their full prefixed name.
    pub aux: BTreeMap<String, Tensor>,
}

fn dtype_of(kind: Kind) -> Result<Dtype> {
    Ok(match kind {
        Kind::Float => Dtype::F32,
        Kind::Double => Dtype::F64,
        Kind::Int64 => Dtype::I64,
        Kind::Int => Dtype::I32,
        Kind::Uint8 => Dtype::U8,
        Kind::Bool => Dtype::BOOL,
        k => return Err(Error::format("checkpoint", format!("unsupported tensor kind {k:?}"))),
    })
}

fn kind_of(dtype: Dtype) -> Result<Kind> {
    Ok(match dtype {
        Dtype::F32 => Kind::Float,
        Dtype::F64 => Kind::Double,
        Dtype::I64 => Kind::Int64,
        Dtype::I32 => Kind::Int,
        Dtype::U8 => Kind::Uint8,
        Dtype::BOOL => Kind::Bool,
        d => return Err(Error::format("checkpoint", format!("unsupported dtype {d:?}"))),
    })
}

/// Write `model` plus auxiliary tensors to `path` atomically.
pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta, aux: &[(String, Tensor)]) -> Result<()> {
    let mut owned: Vec<(String, Dtype, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, t) in model.state() {
        owned.push((format!("{MODEL_PREFIX}{name}"), dtype_of(t.kind())?, shape(&t), tensor_bytes(&t)));
    }
    for (name, t) in aux {
        if name.starts_with(MODEL_PREFIX) {
            return Err(Error::precondition(format!("auxiliary tensor `{name}` uses the reserved model prefix")));
        }
        owned.push((name.clone(), dtype_of(t.kind())?, shape(t), tensor_bytes(t)));
    }
    let mut views = Vec::with_capacity(owned.len());
    for (name, dtype, shape, bytes) in &owned {
        let v = TensorView::new(*dtype, shape.clone(), bytes)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        views.push((name.clone(), v));
    }
    let metadata: HashMap<String, String> = [
        ("format".to_string(), FORMAT_TAG.to_string()),
        ("version".to_string(), FORMAT_VERSION.to_string()),
        ("spec".to_string(), serde_json::to_string(model.spec())?),
        ("meta".to_string(), serde_json::to_string(meta)?),
    ]
    .into_iter()
    .collect();
    let mut bytes = safetensors::serialize(views, &Some(metadata)).map_err(|e| Error::format("checkpoint", e.to_string()))?;
    canonicalize_header(&mut bytes)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Rewrite the JSON header with sorted keys so identical state gives
/// identical bytes (the metadata map iterates in random order).
fn canonicalize_header(bytes: &mut [u8]) -> Result<()> {
    let bad = |r: &str| Error::format("checkpoint", r.to_string());
    let n = u64::from_le_bytes(bytes.get(..8).ok_or_else(|| bad("short header"))?.try_into().expect("8 bytes")) as usize;
    let header = bytes.get(8..8 + n).ok_or_else(|| bad("truncated header"))?;
    let value: serde_json::Value = serde_json::from_slice(header)?;
    let mut sorted = serde_json::to_vec(&sort_keys(value))?;
    if sorted.len() > n {
        return Err(bad("canonical header is longer than the original"));
    }
    sorted.resize(n, b' ');
    bytes[8..8 + n].copy_from_slice(&sorted);
    Ok(())
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(m) => {
            let sorted: BTreeMap<String, serde_json::Value> = m.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            serde_json::Value::Object(sorted.into_iter().collect())
        }
        other => other,
    }
}

fn shape(t: &Tensor) -> Vec<usize> {
    t.size().into_iter().map(|d| d as usize).collect()
}

/// Read a checkpoint, rebuilding the model from its stored spec.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    let bad = |reason: String| Error::Load { path: path.to_path_buf(), reason };
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(e.to_string()))?;
    let md = header.metadata().clone().ok_or_else(|| bad("missing checkpoint metadata".into()))?;
    if md.get("format").map(String::as_str) != Some(FORMAT_TAG) {
        return Err(bad(format!("not a {FORMAT_TAG} file")));
    }
    let version: u32 = md.get("version").and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad version".into()))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let spec: ModelSpec = serde_json::from_str(md.get("spec").ok_or_else(|| bad("missing spec".into()))?)?;
    let meta: CheckpointMeta = serde_json::from_str(md.get("meta").ok_or_else(|| bad("missing meta".into()))?)?;

    let st = SafeTensors::deserialize(&bytes).map_err(|e| bad(e.to_string()))?;
    let model = build_model(&spec, 0)?;
    let expected: Vec<String> = model.state().into_keys().collect();
    let mut seen = 0usize;
    let mut aux = BTreeMap::new();
    for (name, view) in st.tensors() {
        let kind = kind_of(view.dtype())?;
        let dims: Vec<i64> = view.shape().iter().map(|&d| d as i64).collect();
        let t = Tensor::from_data_size(view.data(), &dims, kind);
        if let Some(inner) = name.strip_prefix(MODEL_PREFIX) {
            model.set_tensor(inner, &t)?;
            seen += 1;
        } else {
            aux.insert(name, t);
        }
    }
    if seen != expected.len() {
        return Err(bad(format!("checkpoint holds {seen} model tensors, {} expected", expected.len())));
    }
    Ok(Checkpoint { model, meta, aux })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_hash_and_aux() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.safetensors");
        let m = build_model(&ModelSpec::cifar_resnet(8, 10), 3).unwrap();
        let meta = CheckpointMeta { role: "teacher".into(), epoch: 2, step: 40, val_top1: Some(0.5), seed: 3, ..Default::default() };
        let mask = Tensor::from_slice(&[true, false, true]);
        save_checkpoint(&path, &m, &meta, &[("mask.x".into(), mask.shallow_clone())]).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.model.weight_hash(), m.weight_hash());
        assert_eq!(ck.meta, meta);
        let again = dir.path().join("again.safetensors");
        save_checkpoint(&again, &m, &meta, &[("mask.x".into(), mask.shallow_clone())]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
        assert_eq!(ck.model.spec(), m.spec());
        assert!(ck.aux["mask.x"].equal(&mask));
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.safetensors");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Load { .. })));
        let plain = safetensors::serialize(Vec::<(String, TensorView)>::new(), &None).unwrap();
        std::fs::write(&path, plain).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
