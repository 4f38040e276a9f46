use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constopt::{fit_constants, FitBudget};
use crate::datagen::{DatasetIndex, Point};
use crate::expression::{evaluate, print, Skeleton, TokenVocabulary};
use crate::model::{encode_points, generate, DecodeMode, ModelParams};
use crate::seed::derive_labelled;

/// Error assigned to an index whose generation or fit failed.
pub const FAULT_CEILING: f64 = 1e6;
/// Smallest error kept before taking log10.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexScore {
    pub index: usize,
    /// Fitted equation, or the raw token text when generation was ill-formed.
    pub predicted: String,
    pub error: f64,
    pub faulted: bool,
    /// The targets are constant, so the error is a plain mean squared error.
    pub degenerate: bool,
}

/// Points in canonical order, so every sum below is independent of the
/// order the index stored them in.
fn canonical(points: &[Point]) -> Vec<&Point> {
    let mut sorted: Vec<&Point> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.x.iter()
            .zip(&b.x)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.total_cmp(&b.y))
    });
    sorted
}

fn faulted(index: usize, predicted: String) -> IndexScore {
    IndexScore {
        index,
        predicted,
        error: FAULT_CEILING,
        faulted: true,
        degenerate: false,
    }
}

/// Σ(ŷ−y)² / Σ(y−ȳ)², or the mean squared error when Σ(y−ȳ)² is zero.
/// Returns `None` if a prediction is non-finite. Second field flags the
/// degenerate case.
pub fn relative_squared_error(predictions: &[f64], targets: &[f64]) -> Option<(f64, bool)> {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, y) in predictions.iter().zip(targets) {
        if !p.is_finite() {
            return None;
        }
        num += (p - y) * (p - y);
        den += (y - mean) * (y - mean);
    }
    if !num.is_finite() {
        return None;
    }
    if den > 0.0 {
        Some((num / den, false))
    } else {
        Some((num / n, true))
    }
}

/// Fits `skeleton` to the index's points and scores the result. Used with
/// generated skeletons by [`score_index`] and with true skeletons as an
/// oracle harness.
pub fn score_with_skeleton(
    skeleton: &Skeleton,
    index: &DatasetIndex,
    ordinal: usize,
    budget: &FitBudget,
) -> IndexScore {
    let sorted: Vec<Point> = canonical(&index.points).into_iter().cloned().collect();
    let seed = derive_labelled(0, "fit", ordinal as u64);
    let fit = fit_constants(skeleton, &sorted, budget, seed);
    let predicted = print(&fit.expression);
    if fit.constants.iter().any(|c| !c.is_finite()) {
        return faulted(ordinal, predicted);
    }
    let mut predictions = Vec::with_capacity(sorted.len());
    for p in &sorted {
        match evaluate(&fit.expression, &p.x) {
            Ok(v) => predictions.push(v),
            Err(_) => return faulted(ordinal, predicted),
        }
    }
    let targets: Vec<f64> = sorted.iter().map(|p| p.y).collect();
    match relative_squared_error(&predictions, &targets) {
        Some((error, degenerate)) => IndexScore {
            index: ordinal,
            predicted,
            error,
            faulted: false,
            degenerate,
        },
        None => faulted(ordinal, predicted),
    }
}

/// Runs the full pipeline on one index: encode, greedy decode, fit, score.
pub fn score_index(
    params: &ModelParams,
    vocab: &TokenVocabulary,
    index: &DatasetIndex,
    ordinal: usize,
    budget: &FitBudget,
) -> IndexScore {
    let sorted: Vec<Point> = canonical(&index.points).into_iter().cloned().collect();
    let cfg = params.config();
    if sorted.is_empty() || sorted.len() > cfg.max_points {
        return faulted(ordinal, String::new());
    }
    let tokens = encode_points(params, &sorted).and_then(|emb| {
        generate(params, &emb, cfg.context_len - 1, DecodeMode::Greedy, vocab)
    });
    let tokens = match tokens {
        Ok(t) => t,
        Err(e) => return faulted(ordinal, format!("<{e}>")),
    };
    match vocab.detokenize(&tokens) {
        Ok(skeleton) => score_with_skeleton(&skeleton, index, ordinal, budget),
        Err(_) => {
            let text: Vec<String> = tokens
                .iter()
                .map(|&id| vocab.token(id).map_or_else(|| id.to_string(), |t| t.text()))
                .collect();
            faulted(ordinal, text.join(" "))
        }
    }
}

/// Scores every index in parallel; results come back in dataset order.
pub fn score_dataset(
    params: &ModelParams,
    vocab: &TokenVocabulary,
    data: &[DatasetIndex],
    budget: &FitBudget,
) -> Vec<IndexScore> {
    data.par_iter()
        .enumerate()
        .map(|(i, ix)| score_index(params, vocab, ix, i, budget))
        .collect()
}
