//! Model checkpoint: a directory holding `manifest.json` (config echo and
//! parameter layout) and `params.bin` (little-endian `f32`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const PARAMS: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub config: ModelConfig,
    pub param_count: usize,
    pub total_bytes: u64,
    pub params: Vec<ParamRecord>,
}

pub fn save_checkpoint(model: &Model<f32>, dir: &Path) -> Result<CheckpointManifest> {
    let mut blob = Vec::new();
    let mut params = Vec::with_capacity(model.params.len());
    for p in &model.params {
        params.push(ParamRecord {
            name: p.name.clone(),
            shape: p.shape.clone(),
            trainable: p.trainable,
            byte_offset: blob.len() as u64,
        });
        for v in &p.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        param_count: model.num_trainable(),
        total_bytes: blob.len() as u64,
        params,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bin = dir.join(PARAMS);
    fs::write(&bin, &blob).map_err(|e| Error::io(&bin, e))?;
    let man = dir.join(MANIFEST);
    fs::write(&man, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&man, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Model<f32>> {
    let man = dir.join(MANIFEST);
    let text = fs::read(&man).map_err(|e| Error::io(&man, e))?;
    let value: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| Error::CorruptArchive(format!("checkpoint manifest: {e}")))?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionError { found: version, expected: CHECKPOINT_VERSION });
    }
    let manifest: CheckpointManifest =
        serde_json::from_value(value).map_err(|e| Error::CorruptArchive(format!("checkpoint manifest: {e}")))?;
    let bin = dir.join(PARAMS);
    let blob = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if blob.len() as u64 != manifest.total_bytes {
        return Err(Error::CorruptArchive(format!(
            "params.bin has {} bytes, manifest records {}",
            blob.len(),
            manifest.total_bytes
        )));
    }
    let mut model = Model::<f32>::new(manifest.config.clone(), 0)?;
    if model.params.len() != manifest.params.len() {
        return Err(Error::CorruptArchive("parameter list does not match the configuration".into()));
    }
    for (p, rec) in model.params.iter_mut().zip(&manifest.params) {
        if p.name != rec.name || p.shape != rec.shape {
            return Err(Error::CorruptArchive(format!("parameter {} does not match the configuration", rec.name)));
        }
        let start = rec.byte_offset as usize;
        let end = start + 4 * p.data.len();
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| Error::CorruptArchive(format!("parameter {} runs past the blob", rec.name)))?;
        for (v, b) in p.data.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        if p.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptArchive(format!("parameter {} is not finite", rec.name)));
        }
    }
    Ok(model)
}
