use serde::{Deserialize, Serialize};

/// What one loss record stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Epoch,
    Fold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub unit: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SummaryError {
    #[error("no loss records")]
    Empty,
    #[error("record for unit {0} has a negative or non-finite loss")]
    InvalidLoss(usize),
    #[error("stored averages disagree with the records")]
    StaleAverages,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("old validation loss must be positive")]
pub struct NonPositiveBaseline;

/// Per-unit train/validation losses and their column means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub unit: UnitKind,
    pub records: Vec<LossRecord>,
    pub avg_train: f64,
    pub avg_val: f64,
}

/// Arithmetic means of the train and validation columns.
pub fn average_losses(records: &[LossRecord]) -> Result<(f64, f64), SummaryError> {
    if records.is_empty() {
        return Err(SummaryError::Empty);
    }
    let n = records.len() as f64;
    let train: f64 = records.iter().map(|r| r.train_loss).sum();
    let val: f64 = records.iter().map(|r| r.val_loss).sum();
    Ok((train / n, val / n))
}

/// Percentage reduction of the validation loss from `old` to `new`;
/// negative when the new loss is worse.
pub fn relative_improvement(old_val_loss: f64, new_val_loss: f64) -> Result<f64, NonPositiveBaseline> {
    if !(old_val_loss > 0.0) {
        return Err(NonPositiveBaseline);
    }
    Ok((old_val_loss - new_val_loss) / old_val_loss * 100.0)
}

impl LossSummary {
    pub fn from_records(unit: UnitKind, records: Vec<LossRecord>) -> Result<Self, SummaryError> {
        for r in &records {
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(r.train_loss) || !ok(r.val_loss) {
                return Err(SummaryError::InvalidLoss(r.unit));
            }
        }
        let (avg_train, avg_val) = average_losses(&records)?;
        Ok(LossSummary {
            unit,
            records,
            avg_train,
            avg_val,
        })
    }

    /// Builds a summary from `(train, val)` pairs numbered from `first_unit`.
    pub fn from_pairs(unit: UnitKind, first_unit: usize, pairs: &[(f64, f64)]) -> Result<Self, SummaryError> {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(train_loss, val_loss))| LossRecord {
                unit: first_unit + i,
                train_loss,
                val_loss,
            })
            .collect();
        Self::from_records(unit, records)
    }

    /// Checks that the stored averages match the records to 1e-12.
    pub fn verify(&self) -> Result<(), SummaryError> {
        let (t, v) = average_losses(&self.records)?;
        if (t - self.avg_train).abs() > 1e-12 || (v - self.avg_val).abs() > 1e-12 {
            return Err(SummaryError::StaleAverages);
        }
        Ok(())
    }
}
