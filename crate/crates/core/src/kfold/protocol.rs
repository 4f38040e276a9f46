//! The two training protocols: a seeded 80/20 split validated after every
//! epoch, and k-fold cross-validation with a fresh model per fold.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldAssignment, FoldError};
use super::summary::{LossRecord, LossSummary, SummaryError, UnitKind};
use crate::datagen::DatasetIndex;
use crate::expression::TokenVocabulary;
use crate::model::{
    examples_from_dataset, validate, Example, ExampleError, ModelConfig, ModelConfigError,
    ModelParams, TrainError, Trainer,
};
use crate::seed::{derive_labelled, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Baseline,
    Kfcv,
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Protocol::Baseline),
            "kfcv" => Ok(Protocol::Kfcv),
            other => Err(format!("unknown protocol `{other}` (expected baseline or kfcv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// Number of folds (k-fold protocol only).
    pub k: usize,
    /// Share of indices used for training (baseline only).
    pub train_fraction: f64,
    pub model: ModelConfig,
    pub master_seed: u64,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    /// Train a final k-fold model on every index instead of reusing the best fold.
    #[serde(default)]
    pub retrain_all: bool,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol, model: ModelConfig, master_seed: u64) -> Self {
        ExperimentConfig {
            protocol,
            k: 5,
            train_fraction: 0.8,
            model,
            master_seed,
            dataset: PathBuf::new(),
            output_dir: PathBuf::new(),
            retrain_all: false,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.k < 2 {
            return Err(ProtocolError::Fold(FoldError::InvalidK(self.k)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ProtocolError::TrainFraction(self.train_fraction));
        }
        self.model.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("protocol mismatch: expected {expected:?}, configured {found:?}")]
    WrongProtocol { expected: Protocol, found: Protocol },
    #[error("train fraction {0} outside (0, 1)")]
    TrainFraction(f64),
    #[error("dataset needs at least 2 indices, has {0}")]
    TooSmall(usize),
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error(transparent)]
    Model(#[from] ModelConfigError),
    #[error("index {index}: {source}")]
    Example {
        index: usize,
        #[source]
        source: ExampleError,
    },
    #[error("fold {fold}, epoch {epoch}: {source}")]
    FoldTraining {
        fold: usize,
        epoch: usize,
        #[source]
        source: TrainError,
    },
    #[error("epoch {epoch}: {source}")]
    EpochTraining {
        epoch: usize,
        #[source]
        source: TrainError,
    },
    #[error("fold {0}: a validation index appears in the training union")]
    Leakage(usize),
    #[error(transparent)]
    Summary(#[from] SummaryError),
}

/// Seed of the model trained in k-fold round `fold`.
pub fn fold_model_seed(master: u64, fold: usize) -> u64 {
    derive_labelled(master, "fold", fold as u64)
}

fn baseline_model_seed(master: u64) -> u64 {
    derive_labelled(master, "baseline", 0)
}

/// Trains a fresh model for `epochs`, validating after each epoch.
/// Returns the parameters and one record per epoch (1-based).
fn train_with_curve(
    model: &ModelConfig,
    seed: u64,
    vocab: &TokenVocabulary,
    train: &[Example],
    val: &[Example],
) -> Result<(ModelParams, Vec<LossRecord>), (usize, TrainError)> {
    let cfg = ModelConfig {
        seed,
        ..model.clone()
    };
    let mut trainer = Trainer::new(ModelParams::init(&cfg, vocab.len()));
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let shuffle_seed = derive_labelled(seed, "epoch", epoch as u64);
        let train_loss = trainer
            .train_epoch(train, vocab, shuffle_seed)
            .map_err(|e| (epoch, e))?;
        let val_loss = validate(&trainer.params, val, vocab).map_err(|e| (epoch, e))?;
        records.push(LossRecord {
            unit: epoch,
            train_loss,
            val_loss,
        });
    }
    Ok((trainer.params, records))
}

fn to_examples(
    data: &[DatasetIndex],
    vocab: &TokenVocabulary,
    model: &ModelConfig,
) -> Result<Vec<Example>, ProtocolError> {
    examples_from_dataset(data, vocab, model)
        .map_err(|(index, source)| ProtocolError::Example { index, source })
}

fn pick(examples: &[Example], indices: &[usize]) -> Vec<Example> {
    indices.iter().map(|&i| examples[i].clone()).collect()
}

/// One k-fold round.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRun {
    pub fold: usize,
    pub validation_indices: Vec<usize>,
    /// Per-epoch curve of this round.
    pub epochs: LossSummary,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfcvOutcome {
    pub assignment: FoldAssignment,
    /// One record per fold: final-epoch train loss, validation loss on the fold.
    pub summary: LossSummary,
    pub folds: Vec<FoldRun>,
    /// Fold with the lowest validation loss (lowest ordinal on ties).
    pub best_fold: usize,
    /// Model trained on every index, when requested.
    pub retrained: Option<ModelParams>,
}

impl KfcvOutcome {
    /// Parameters designated for downstream evaluation.
    pub fn representative(&self) -> &ModelParams {
        self.retrained
            .as_ref()
            .unwrap_or(&self.folds[self.best_fold].params)
    }
}

/// Runs k-fold cross-validation. Folds are independent and may run in
/// parallel; results are assembled in fold order.
pub fn run_kfcv(data: &[DatasetIndex], cfg: &ExperimentConfig) -> Result<KfcvOutcome, ProtocolError> {
    if cfg.protocol != Protocol::Kfcv {
        return Err(ProtocolError::WrongProtocol {
            expected: Protocol::Kfcv,
            found: cfg.protocol,
        });
    }
    cfg.validate()?;
    let vocab = TokenVocabulary::new(cfg.model.variable_count);
    let examples = to_examples(data, &vocab, &cfg.model)?;
    let assignment = make_folds(data.len(), cfg.k, derive_labelled(cfg.master_seed, "folds", 0))?;

    let runs: Vec<Result<FoldRun, ProtocolError>> = (0..cfg.k)
        .into_par_iter()
        .map(|fold| {
            let val_ix = assignment.validation_indices(fold);
            let train_ix = assignment.training_indices(fold);
            let mut in_val = vec![false; data.len()];
            for &i in &val_ix {
                in_val[i] = true;
            }
            if train_ix.iter().any(|&i| in_val[i]) {
                return Err(ProtocolError::Leakage(fold));
            }
            let (params, records) = train_with_curve(
                &cfg.model,
                fold_model_seed(cfg.master_seed, fold),
                &vocab,
                &pick(&examples, &train_ix),
                &pick(&examples, &val_ix),
            )
            .map_err(|(epoch, source)| ProtocolError::FoldTraining { fold, epoch, source })?;
            Ok(FoldRun {
                fold,
                validation_indices: val_ix,
                epochs: LossSummary::from_records(UnitKind::Epoch, records)?,
                params,
            })
        })
        .collect();
    let folds = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let records: Vec<LossRecord> = folds
        .iter()
        .map(|run| {
            let last = run.epochs.records.last().expect("epochs > 0");
            LossRecord {
                unit: run.fold,
                train_loss: last.train_loss,
                val_loss: last.val_loss,
            }
        })
        .collect();
    let summary = LossSummary::from_records(UnitKind::Fold, records)?;
    let best_fold = summary
        .records
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| {
            if r.val_loss < summary.records[best].val_loss {
                i
            } else {
                best
            }
        });
    let retrained = if cfg.retrain_all {
        let seed = derive_labelled(cfg.master_seed, "retrain", 0);
        let rcfg = ModelConfig {
            seed,
            ..cfg.model.clone()
        };
        let mut trainer = Trainer::new(ModelParams::init(&rcfg, vocab.len()));
        for epoch in 1..=rcfg.epochs {
            trainer
                .train_epoch(&examples, &vocab, derive_labelled(seed, "epoch", epoch as u64))
                .map_err(|source| ProtocolError::EpochTraining { epoch, source })?;
        }
        Some(trainer.params)
    } else {
        None
    };
    Ok(KfcvOutcome {
        assignment,
        summary,
        folds,
        best_fold,
        retrained,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    /// One record per epoch: epoch train loss, post-epoch validation loss.
    pub summary: LossSummary,
    pub params: ModelParams,
}

/// Seeded train/validation split: the first `round(n * fraction)` shuffled
/// indices train, clamped so both sides are non-empty. Both lists ascend.
pub fn baseline_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Runs the 80/20 baseline protocol.
pub fn run_baseline(data: &[DatasetIndex], cfg: &ExperimentConfig) -> Result<BaselineOutcome, ProtocolError> {
    if cfg.protocol != Protocol::Baseline {
        return Err(ProtocolError::WrongProtocol {
            expected: Protocol::Baseline,
            found: cfg.protocol,
        });
    }
    cfg.validate()?;
    if data.len() < 2 {
        return Err(ProtocolError::TooSmall(data.len()));
    }
    let vocab = TokenVocabulary::new(cfg.model.variable_count);
    let examples = to_examples(data, &vocab, &cfg.model)?;
    let (train_ix, val_ix) = baseline_split(
        data.len(),
        cfg.train_fraction,
        derive_labelled(cfg.master_seed, "split", 0),
    );
    let (params, records) = train_with_curve(
        &cfg.model,
        baseline_model_seed(cfg.master_seed),
        &vocab,
        &pick(&examples, &train_ix),
        &pick(&examples, &val_ix),
    )
    .map_err(|(epoch, source)| ProtocolError::EpochTraining { epoch, source })?;
    Ok(BaselineOutcome {
        train_indices: train_ix,
        validation_indices: val_ix,
        summary: LossSummary::from_records(UnitKind::Epoch, records)?,
        params,
    })
}
