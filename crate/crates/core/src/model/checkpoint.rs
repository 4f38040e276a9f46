//! Versioned JSON checkpoints: configuration, vocabulary, and every
//! parameter tensor with its shape.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::expression::TokenVocabulary;

pub const CHECKPOINT_FORMAT: &str = "symkfcv-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a checkpoint: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: unsupported checkpoint version {found}")]
    Version { path: PathBuf, found: u32 },
    #[error("config hash mismatch: checkpoint {stored}, expected {expected}")]
    ConfigHash { stored: String, expected: String },
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    config_hash: String,
    vocabulary: Vec<String>,
    tensors: Vec<TensorRecord>,
}

/// A loaded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocabulary: TokenVocabulary,
    pub config_hash: String,
}

pub fn config_hash(config: &ModelConfig, vocabulary: &TokenVocabulary) -> String {
    config.hash_with_vocabulary(&vocabulary.strings())
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    vocabulary: &TokenVocabulary,
) -> Result<(), CheckpointError> {
    let tensors = params
        .tensors()
        .iter()
        .map(|t| TensorRecord {
            name: t.name.clone(),
            shape: t.shape.clone(),
            data: params.as_slice()[t.range.clone()].to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: params.config().clone(),
        config_hash: config_hash(params.config(), vocabulary),
        vocabulary: vocabulary.strings(),
        tensors,
    };
    let text = serde_json::to_string(&file).expect("checkpoint serializes");
    fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let format_err = |message: String| CheckpointError::Format {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(format_err(format!("format tag `{}`", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            path: path.to_path_buf(),
            found: file.version,
        });
    }
    let vocabulary =
        TokenVocabulary::from_strings(&file.vocabulary).map_err(|e| format_err(e.to_string()))?;
    let expected = config_hash(&file.config, &vocabulary);
    if expected != file.config_hash {
        return Err(CheckpointError::ConfigHash {
            stored: file.config_hash,
            expected,
        });
    }
    file.config
        .validate()
        .map_err(|e| format_err(e.to_string()))?;
    let template = ModelParams::zeros(&file.config, vocabulary.len());
    if file.tensors.len() != template.tensors().len() {
        return Err(format_err(format!(
            "{} tensors, expected {}",
            file.tensors.len(),
            template.tensors().len()
        )));
    }
    let mut data = Vec::with_capacity(template.len());
    for (record, spec) in file.tensors.into_iter().zip(template.tensors()) {
        if record.name != spec.name || record.shape != spec.shape || record.data.len() != spec.range.len() {
            return Err(CheckpointError::Shape {
                name: record.name,
                found: record.shape,
                expected: spec.shape.clone(),
            });
        }
        data.extend(record.data);
    }
    let params = ModelParams::from_flat(&file.config, vocabulary.len(), data)
        .expect("sizes checked per tensor");
    Ok(Checkpoint {
        params,
        vocabulary,
        config_hash: file.config_hash,
    })
}

/// Loads a checkpoint and requires its config hash to equal `expected_hash`.
pub fn load_checkpoint_expecting(path: &Path, expected_hash: &str) -> Result<Checkpoint, CheckpointError> {
    let ck = load_checkpoint(path)?;
    if ck.config_hash != expected_hash {
        return Err(CheckpointError::ConfigHash {
            stored: ck.config_hash,
            expected: expected_hash.to_string(),
        });
    }
    Ok(ck)
}
