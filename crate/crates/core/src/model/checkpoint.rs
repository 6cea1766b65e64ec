//! JSON checkpoints: a header with format name, version and model config,
//! followed by a map from tensor name to `{shape: [rows, cols], data}`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams, Tensor, Weights};

pub const CHECKPOINT_FORMAT: &str = "ppgbench-toy-transformer";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StoredTensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    #[serde(default)]
    frozen: BTreeSet<String>,
    tensors: BTreeMap<String, StoredTensor>,
}

pub fn save_checkpoint<W: Write>(params: &ModelParams, writer: W) -> Result<(), ModelError> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        frozen: params.frozen.clone(),
        tensors: params
            .weights
            .tensors()
            .into_iter()
            .map(|(n, t)| {
                (
                    n,
                    StoredTensor {
                        shape: [t.rows, t.cols],
                        data: t.data.clone(),
                    },
                )
            })
            .collect(),
    };
    serde_json::to_writer(writer, &ck).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint<R: Read>(reader: R) -> Result<ModelParams, ModelError> {
    let mut ck: Checkpoint =
        serde_json::from_reader(reader).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unknown format '{}'", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    // Shapes come from the config; the stored tensors must match them.
    let mut weights = Weights::init(&ck.config)?;
    for (name, slot) in weights.tensors_mut() {
        let stored = ck
            .tensors
            .remove(&name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor '{name}'")))?;
        if stored.shape != [slot.rows, slot.cols] || stored.data.len() != slot.len() {
            return Err(ModelError::Checkpoint(format!(
                "tensor '{name}' has shape {:?}, config implies [{}, {}]",
                stored.shape, slot.rows, slot.cols
            )));
        }
        *slot = Tensor::from_vec(slot.rows, slot.cols, stored.data);
    }
    if let Some(extra) = ck.tensors.keys().next() {
        return Err(ModelError::Checkpoint(format!("unexpected tensor '{extra}'")));
    }
    Ok(ModelParams {
        config: ck.config,
        weights,
        frozen: ck.frozen,
    })
}
