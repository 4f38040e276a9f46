use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed::rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FoldError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("cannot split {n} indices into {k} non-empty folds")]
    TooFewIndices { n: usize, k: usize },
}

/// Seeded partition of `0..n` into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold id of each dataset index.
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

/// Shuffles `0..n` with `seed` and slices the permutation into `k`
/// contiguous blocks; the first `n % k` folds hold one extra index.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment, FoldError> {
    if k < 2 {
        return Err(FoldError::InvalidK(k));
    }
    if n < k {
        return Err(FoldError::TooFewIndices { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let base = n / k;
    let extra = n % k;
    let mut fold_of = vec![0; n];
    let mut at = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &ix in &order[at..at + size] {
            fold_of[ix] = fold;
        }
        at += size;
    }
    Ok(FoldAssignment { k, fold_of, seed })
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// Indices held out in round `fold`, ascending.
    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Union of the other `k - 1` folds, ascending.
    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}
