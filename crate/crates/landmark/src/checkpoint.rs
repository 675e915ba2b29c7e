//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `LMKCKPT1`, a little-endian `u64` header
//! length, a JSON header (variant, model configuration, array names and
//! shapes, optional training metadata), then every array's values as
//! little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use landmark_core::model::{Model, ModelConfig, Variant};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{require_file, Error, Result};

const MAGIC: &[u8; 8] = b"LMKCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub variant: Variant,
    pub config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<TrainingMeta>,
    pub arrays: Vec<ArrayInfo>,
}

pub fn encode(model: &Model, meta: Option<TrainingMeta>) -> Vec<u8> {
    let state = model.state();
    let header = Header {
        variant: model.variant(),
        config: model.config().clone(),
        meta,
        arrays: state
            .iter()
            .map(|(name, shape, _)| ArrayInfo {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let values: usize = state.iter().map(|(_, _, v)| v.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, v) in &state {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(Model, Header), String> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or("truncated header")?;
    let header: Header = serde_json::from_slice(body).map_err(|e| format!("bad header: {e}"))?;
    let mut data = &bytes[16 + hlen..];
    let mut state = Vec::with_capacity(header.arrays.len());
    for a in &header.arrays {
        let n: usize = a.shape.iter().product();
        if data.len() < 8 * n {
            return Err(format!("truncated data for `{}`", a.name));
        }
        let values = data[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        data = &data[8 * n..];
        state.push((a.name.clone(), a.shape.clone(), values));
    }
    if !data.is_empty() {
        return Err(format!("{} trailing bytes", data.len()));
    }
    // Initial values are overwritten below; the generator is irrelevant.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::build(header.variant, header.config.clone(), &mut rng).map_err(|e| e.to_string())?;
    model.load_state(&state).map_err(|e| e.to_string())?;
    Ok((model, header))
}

/// Writes through a temporary file so a failed write never leaves a
/// truncated checkpoint behind.
pub fn save(path: &Path, model: &Model, meta: Option<TrainingMeta>) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, encode(model, meta)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Model, Header)> {
    require_file(path, "checkpoint")?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Validation(format!("checkpoint {}: {e}", path.display())))
}
