use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::batch::{Batch, Example};
use super::inference::batch_loss_sum;
use super::network::{cross_entropy, decoder_backward, decoder_forward, encoder_backward, encoder_forward};
use super::params::ModelParams;
use crate::expression::TokenVocabulary;
use crate::seed::{derive_seed, rng};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("empty shard")]
    EmptyShard,
    #[error("non-finite loss {loss} at batch {batch} (rows {first_row}..{end_row} of the shuffled shard)")]
    NonFiniteLoss {
        batch: usize,
        loss: f64,
        first_row: usize,
        end_row: usize,
    },
    #[error("parameters became non-finite after batch {batch}")]
    NonFiniteParams { batch: usize },
}

/// Gradient of the mean token cross-entropy over one batch, plus the summed
/// loss and target count. Rows are differentiated independently and summed
/// in row order, so the result does not depend on the thread count.
pub fn loss_and_gradient(
    params: &ModelParams,
    batch: &Batch,
    dropout_seed: u64,
) -> (f64, usize, Vec<f64>) {
    let count = batch.target_count();
    let scale = 1.0 / count.max(1) as f64;
    let row_grad = |r: usize| {
        let mut grad = vec![0.0; params.len()];
        let row = batch.row(r);
        let mut drop_rng = rng(derive_seed(dropout_seed, r as u64));
        let (emb, enc_cache) = encoder_forward(params, &row.features, row.n_points);
        let (logits, dec_cache) = decoder_forward(params, &emb, &row.inputs, Some(&mut drop_rng));
        let (loss, d_logits) = cross_entropy(&logits, params.vocab_size(), &row.targets, scale);
        let d_emb = decoder_backward(params, &dec_cache, &d_logits, &mut grad);
        encoder_backward(params, &enc_cache, &d_emb, &mut grad);
        (loss, grad)
    };
    let rows: Vec<(f64, Vec<f64>)> = (0..batch.rows).into_par_iter().map(row_grad).collect();
    let mut total = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in rows {
        loss += l;
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
    }
    (loss, count, total)
}

/// Parameters plus Adam moment estimates.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: ModelParams,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Trainer {
    pub fn new(params: ModelParams) -> Self {
        let n = params.len();
        Trainer {
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn apply(&mut self, grad: &[f64]) {
        let lr = self.params.config().learning_rate;
        if lr == 0.0 {
            self.step += 1;
            return;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, m), v), &g) in self
            .params
            .as_mut_slice()
            .iter_mut()
            .zip(&mut self.m)
            .zip(&mut self.v)
            .zip(grad)
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }

    /// One pass over `shard` in an order shuffled by `seed`. Returns the
    /// token-weighted mean of the batch losses, measured before each update.
    pub fn train_epoch(
        &mut self,
        shard: &[Example],
        vocab: &TokenVocabulary,
        seed: u64,
    ) -> Result<f64, TrainError> {
        if shard.is_empty() {
            return Err(TrainError::EmptyShard);
        }
        let cfg = self.params.config().clone();
        let mut order: Vec<usize> = (0..shard.len()).collect();
        order.shuffle(&mut rng(seed));
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<&Example> = chunk.iter().map(|&i| &shard[i]).collect();
            let batch = Batch::assemble(&rows, vocab, &cfg);
            let (l, n, grad) = loss_and_gradient(&self.params, &batch, derive_seed(seed, b as u64));
            if !l.is_finite() {
                let first_row = b * cfg.batch_size;
                return Err(TrainError::NonFiniteLoss {
                    batch: b,
                    loss: l / n as f64,
                    first_row,
                    end_row: first_row + chunk.len(),
                });
            }
            loss_sum += l;
            count += n;
            self.apply(&grad);
            if !self.params.is_finite() {
                return Err(TrainError::NonFiniteParams { batch: b });
            }
        }
        Ok(loss_sum / count as f64)
    }
}

/// Mean token cross-entropy over a shard, without updates.
pub fn validate(
    params: &ModelParams,
    shard: &[Example],
    vocab: &TokenVocabulary,
) -> Result<f64, TrainError> {
    if shard.is_empty() {
        return Err(TrainError::EmptyShard);
    }
    let cfg = params.config();
    let mut sum = 0.0;
    let mut count = 0;
    for chunk in shard.chunks(cfg.batch_size) {
        let rows: Vec<&Example> = chunk.iter().collect();
        let batch = Batch::assemble(&rows, vocab, cfg);
        let (s, n) = batch_loss_sum(params, &batch);
        sum += s;
        count += n;
    }
    Ok(sum / count as f64)
}
