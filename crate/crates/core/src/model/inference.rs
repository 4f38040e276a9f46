use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::network::{cross_entropy, decoder_forward, encoder_forward, softmax_rows};
use super::params::ModelParams;
use crate::expression::{TokenId, TokenVocabulary};
use crate::seed::rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("point set has no valid points")]
    EmptyPointSet,
    #[error("point buffer has {len} values, expected {rows} rows of {width}")]
    PointShape { len: usize, rows: usize, width: usize },
    #[error("prefix of {prefix} token(s) does not fit a context of {context}")]
    ContextOverflow { prefix: usize, context: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: TokenId, vocab: usize },
    #[error("embedding has {actual} components, expected {expected}")]
    EmbeddingWidth { actual: usize, expected: usize },
}

/// Embeds the valid rows of a padded point set. `points` holds
/// `mask.len()` rows of `input_dim` features.
pub fn encode(params: &ModelParams, points: &[f64], mask: &[bool]) -> Result<Vec<f64>, ModelError> {
    let width = params.config().input_dim();
    if points.len() != mask.len() * width {
        return Err(ModelError::PointShape {
            len: points.len(),
            rows: mask.len(),
            width,
        });
    }
    let valid: Vec<f64> = points
        .chunks(width)
        .zip(mask)
        .filter(|(_, m)| **m)
        .flat_map(|(row, _)| row.iter().copied())
        .collect();
    let n = valid.len() / width;
    if n == 0 {
        return Err(ModelError::EmptyPointSet);
    }
    Ok(encoder_forward(params, &valid, n).0)
}

/// Embeds a raw point set (features are compressed internally).
pub fn encode_points(
    params: &ModelParams,
    points: &[crate::datagen::Point],
) -> Result<Vec<f64>, ModelError> {
    let feats = super::batch::point_features(points);
    encode(params, &feats, &vec![true; points.len()])
}

fn check_prefix(params: &ModelParams, embedding: &[f64], prefix: &[TokenId]) -> Result<(), ModelError> {
    let cfg = params.config();
    if embedding.len() != cfg.embed_dim {
        return Err(ModelError::EmbeddingWidth {
            actual: embedding.len(),
            expected: cfg.embed_dim,
        });
    }
    if prefix.len() >= cfg.context_len {
        return Err(ModelError::ContextOverflow {
            prefix: prefix.len(),
            context: cfg.context_len,
        });
    }
    if let Some(&id) = prefix.iter().find(|&&id| id as usize >= params.vocab_size()) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab: params.vocab_size(),
        });
    }
    Ok(())
}

/// Logits at every position for the decoder input `[start] ++ prefix`;
/// row `t` scores the token that follows `prefix[..t]`.
pub fn decoder_logits(
    params: &ModelParams,
    embedding: &[f64],
    prefix: &[TokenId],
    start_id: TokenId,
) -> Result<Vec<Vec<f64>>, ModelError> {
    check_prefix(params, embedding, prefix)?;
    let mut ids = Vec::with_capacity(prefix.len() + 1);
    ids.push(start_id);
    ids.extend_from_slice(prefix);
    let (logits, _) = decoder_forward(params, embedding, &ids, None);
    Ok(logits.chunks(params.vocab_size()).map(<[f64]>::to_vec).collect())
}

/// Next-token distribution after `prefix`.
pub fn decode_step(
    params: &ModelParams,
    embedding: &[f64],
    prefix: &[TokenId],
    start_id: TokenId,
) -> Result<Vec<f64>, ModelError> {
    let logits = decoder_logits(params, embedding, prefix, start_id)?;
    let last = logits.last().expect("at least the start position");
    Ok(softmax_rows(last, last.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample(u64),
}

/// Autoregressive generation until the end marker or `max_len` tokens.
/// The end marker is not included in the output.
pub fn generate(
    params: &ModelParams,
    embedding: &[f64],
    max_len: usize,
    mode: DecodeMode,
    vocab: &TokenVocabulary,
) -> Result<Vec<TokenId>, ModelError> {
    let max_len = max_len.min(params.config().context_len);
    let mut sampler = match mode {
        DecodeMode::Sample(seed) => Some(rng(seed)),
        DecodeMode::Greedy => None,
    };
    let mut out = Vec::new();
    while out.len() < max_len {
        let probs = decode_step(params, embedding, &out, vocab.start_id())?;
        let next = match sampler.as_mut() {
            None => argmax(&probs),
            Some(r) => {
                let u: f64 = r.random();
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        } as TokenId;
        if next == vocab.end_id() {
            break;
        }
        out.push(next);
    }
    Ok(out)
}

/// First index of the largest value.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Summed cross-entropy and target count for one batch row.
pub(crate) fn row_loss(params: &ModelParams, batch: &Batch, r: usize) -> (f64, usize) {
    let row = batch.row(r);
    let (emb, _) = encoder_forward(params, &row.features, row.n_points);
    let (logits, _) = decoder_forward(params, &emb, &row.inputs, None);
    let (loss, _) = cross_entropy(&logits, params.vocab_size(), &row.targets, 0.0);
    (loss, row.targets.len())
}

/// Mean token-level cross-entropy over the unmasked targets of a batch.
pub fn loss(params: &ModelParams, batch: &Batch) -> f64 {
    let (sum, count) = batch_loss_sum(params, batch);
    sum / count as f64
}

/// Summed cross-entropy and target count over a batch, rows reduced in order.
pub(crate) fn batch_loss_sum(params: &ModelParams, batch: &Batch) -> (f64, usize) {
    use rayon::prelude::*;
    let per_row: Vec<(f64, usize)> = (0..batch.rows)
        .into_par_iter()
        .map(|r| row_loss(params, batch, r))
        .collect();
    per_row
        .into_iter()
        .fold((0.0, 0), |(s, c), (l, n)| (s + l, c + n))
}
