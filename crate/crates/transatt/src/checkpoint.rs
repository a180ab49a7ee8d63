//! JSON checkpoints: the model configuration, the vocabulary, the attribute
//! list and every parameter tensor as a flat array with its shape.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces the model bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transatt_core::encoder::WordEmbeddingTable;
use transatt_core::model::{ModelCheckpoint, ModelConfig, ModelError, TrainingMeta, TransAtt, FORMAT_VERSION};
use transatt_core::numerics::{Matrix, Vector};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Data(#[from] crate::DataError),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format_version {found} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("checkpoint lacks tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint has unexpected tensor `{0}`")]
    UnknownTensor(String),
    #[error("tensor `{name}` has shape {found:?} and {len} values, expected {expected:?}")]
    Shape { name: String, expected: (usize, usize), found: (usize, usize), len: usize },
    #[error("checkpoint contains a non-finite value in `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    name: String,
    shape: (usize, usize),
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    meta: TrainingMeta,
    vocab: Vec<String>,
    attributes: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn to_json(ckpt: &ModelCheckpoint) -> Result<String, CheckpointError> {
    let model = &ckpt.model;
    let mut tensors = Vec::new();
    let mut non_finite = None;
    model.for_each_tensor(|name, shape, data| {
        if non_finite.is_none() && data.iter().any(|v| !v.is_finite()) {
            non_finite = Some(name.clone());
        }
        tensors.push(Tensor { name, shape, data: data.to_vec() });
    });
    if let Some(name) = non_finite {
        return Err(CheckpointError::NonFinite(name));
    }
    let file = CheckpointFile {
        format_version: ckpt.format_version,
        config: model.config.clone(),
        meta: ckpt.meta.clone(),
        vocab: model.encoder.table.vocab().to_vec(),
        attributes: model.attributes.names().to_vec(),
        tensors,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str) -> Result<ModelCheckpoint, CheckpointError> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: probe.format_version });
    }
    let file: CheckpointFile = serde_json::from_str(text)?;
    let dim = file.config.word_dim;
    let table = WordEmbeddingTable::from_parts(
        file.vocab.clone(),
        Matrix::zeros(file.vocab.len(), dim),
        Vector::zeros(dim),
        file.config.trainable_embeddings,
    );
    let mut model = TransAtt::init(file.config.clone(), Vec::new(), file.attributes, Some(table))?;

    let mut stored: std::collections::BTreeMap<String, Tensor> =
        file.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
    let mut failure = None;
    model.for_each_tensor_mut(|name, shape, slot| {
        if failure.is_some() {
            return;
        }
        match stored.remove(&name) {
            None => failure = Some(CheckpointError::MissingTensor(name)),
            Some(t) if t.shape != shape || t.data.len() != slot.len() => {
                failure = Some(CheckpointError::Shape { name, expected: shape, found: t.shape, len: t.data.len() })
            }
            Some(t) => slot.copy_from_slice(&t.data),
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if let Some(extra) = stored.into_keys().next() {
        return Err(CheckpointError::UnknownTensor(extra));
    }
    Ok(ModelCheckpoint { format_version: FORMAT_VERSION, model, meta: file.meta })
}

pub fn save(ckpt: &ModelCheckpoint, path: &Path) -> Result<(), CheckpointError> {
    let text = to_json(ckpt)?;
    fs::write(path, text).map_err(|e| crate::DataError::io(path, e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelCheckpoint, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|e| crate::DataError::io(path, e))?;
    from_json(&text)
}
