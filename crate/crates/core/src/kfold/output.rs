//! On-disk layout of an experiment: `summary.json`, `epochs.csv`, and per-fold
//! `fold_<i>/` directories with their own curve and checkpoint.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::protocol::{BaselineOutcome, ExperimentConfig, KfcvOutcome, Protocol};
use super::summary::{LossRecord, LossSummary, SummaryError, UnitKind};
use crate::expression::TokenVocabulary;
use crate::model::{save_checkpoint, CheckpointError, ModelConfig, ModelParams};

pub const SUMMARY_SCHEMA: &str = "symkfcv-summary";
pub const SUMMARY_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 3] = ["unit", "train_loss", "val_loss"];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Summary {
        path: PathBuf,
        #[source]
        source: SummaryError,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings that shaped the losses. Paths are left out so that reruns into
/// another directory produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub k: Option<usize>,
    pub train_fraction: Option<f64>,
    pub master_seed: u64,
    pub retrain_all: bool,
    pub model: ModelConfig,
}

impl ConfigEcho {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let kfcv = cfg.protocol == Protocol::Kfcv;
        ConfigEcho {
            k: kfcv.then_some(cfg.k),
            train_fraction: (!kfcv).then_some(cfg.train_fraction),
            master_seed: cfg.master_seed,
            retrain_all: kfcv && cfg.retrain_all,
            model: cfg.model.clone(),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema: String,
    pub version: u32,
    pub protocol: Protocol,
    pub summary: LossSummary,
    /// Per-epoch curve of every fold, in fold order (k-fold only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fold_trajectories: Vec<LossSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative_fold: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_improvement_percent: Option<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

const FOLD_NOTES: [&str; 3] = [
    "fold train_loss is the final-epoch training loss of that fold's model",
    "epochs apply per fold; each fold trains a freshly initialised model",
    "representative checkpoint is the fold with the lowest validation loss unless retrain_all is set",
];

const BASELINE_NOTES: [&str; 1] = [
    "the held-out share is used as validation data after every epoch",
];

impl ExperimentSummary {
    /// Summary without training provenance, e.g. for externally supplied tables.
    pub fn bare(protocol: Protocol, summary: LossSummary) -> Self {
        ExperimentSummary {
            schema: SUMMARY_SCHEMA.into(),
            version: SUMMARY_VERSION,
            protocol,
            summary,
            fold_trajectories: Vec::new(),
            representative_fold: None,
            config: None,
            relative_improvement_percent: None,
            notes: Vec::new(),
        }
    }

    pub fn from_baseline(outcome: &BaselineOutcome, cfg: &ExperimentConfig) -> Self {
        ExperimentSummary {
            config: Some(ConfigEcho::from_config(cfg)),
            notes: BASELINE_NOTES.iter().map(|s| s.to_string()).collect(),
            ..Self::bare(Protocol::Baseline, outcome.summary.clone())
        }
    }

    pub fn from_kfcv(outcome: &KfcvOutcome, cfg: &ExperimentConfig) -> Self {
        ExperimentSummary {
            fold_trajectories: outcome.folds.iter().map(|f| f.epochs.clone()).collect(),
            representative_fold: (!cfg.retrain_all).then_some(outcome.best_fold),
            config: Some(ConfigEcho::from_config(cfg)),
            notes: FOLD_NOTES.iter().map(|s| s.to_string()).collect(),
            ..Self::bare(Protocol::Kfcv, outcome.summary.clone())
        }
    }

    /// Checks the schema tag, the unit kind against the protocol, and the
    /// stored averages.
    pub fn check(&self) -> Result<(), String> {
        if self.schema != SUMMARY_SCHEMA {
            return Err(format!("schema `{}`, expected `{SUMMARY_SCHEMA}`", self.schema));
        }
        if self.version != SUMMARY_VERSION {
            return Err(format!("version {}, expected {SUMMARY_VERSION}", self.version));
        }
        let want = match self.protocol {
            Protocol::Baseline => UnitKind::Epoch,
            Protocol::Kfcv => UnitKind::Fold,
        };
        if self.summary.unit != want {
            return Err(format!("{:?} summary with {:?} records", self.protocol, self.summary.unit));
        }
        self.summary.verify().map_err(|e| e.to_string())?;
        for t in &self.fold_trajectories {
            t.verify().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

pub fn write_summary(path: &Path, summary: &ExperimentSummary) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<ExperimentSummary, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let s: ExperimentSummary = serde_json::from_str(&text).map_err(|e| OutputError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    s.check().map_err(|message| OutputError::Format {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(s)
}

/// Writes `unit,train_loss,val_loss` rows with round-trip float formatting.
pub fn write_loss_csv(path: &Path, records: &[LossRecord]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([r.unit.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(OutputError::Format {
            path: path.to_path_buf(),
            message: format!("header must be {}", CSV_HEADER.join(",")),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> OutputError {
    OutputError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn save(path: PathBuf, params: &ModelParams, vocab: &TokenVocabulary) -> Result<(), OutputError> {
    save_checkpoint(&path, params, vocab)?;
    Ok(())
}

/// Writes `summary.json`, `epochs.csv` and `checkpoint.json` for a baseline run.
pub fn write_baseline(dir: &Path, outcome: &BaselineOutcome, cfg: &ExperimentConfig) -> Result<ExperimentSummary, OutputError> {
    ensure_dir(dir)?;
    let vocab = TokenVocabulary::new(cfg.model.variable_count);
    let summary = ExperimentSummary::from_baseline(outcome, cfg);
    write_loss_csv(&dir.join("epochs.csv"), &outcome.summary.records)?;
    save(dir.join("checkpoint.json"), &outcome.params, &vocab)?;
    write_summary(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Writes the k-fold layout: fold-level `epochs.csv`, one `fold_<i>/` per
/// round, and the representative model as the top-level checkpoint.
pub fn write_kfcv(dir: &Path, outcome: &KfcvOutcome, cfg: &ExperimentConfig) -> Result<ExperimentSummary, OutputError> {
    ensure_dir(dir)?;
    let vocab = TokenVocabulary::new(cfg.model.variable_count);
    let summary = ExperimentSummary::from_kfcv(outcome, cfg);
    write_loss_csv(&dir.join("epochs.csv"), &outcome.summary.records)?;
    for run in &outcome.folds {
        let fold_dir = dir.join(format!("fold_{}", run.fold));
        ensure_dir(&fold_dir)?;
        write_loss_csv(&fold_dir.join("epochs.csv"), &run.epochs.records)?;
        save(fold_dir.join("checkpoint.json"), &run.params, &vocab)?;
    }
    save(dir.join("checkpoint.json"), outcome.representative(), &vocab)?;
    let folds_json = serde_json::to_string(&outcome.assignment).expect("assignment serializes");
    let folds_path = dir.join("folds.json");
    fs::write(&folds_path, folds_json).map_err(io_err(&folds_path))?;
    write_summary(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
