use super::config::ModelConfig;
use super::network::squash;
use crate::datagen::DatasetIndex;
use crate::expression::{parse_skeleton, ParseError, TokenError, TokenId, TokenVocabulary};

/// One training sequence: compressed point features and the skeleton tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `n_points` rows of `input_dim` features.
    pub features: Vec<f64>,
    pub n_points: usize,
    /// Prefix-order skeleton tokens, without markers.
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExampleError {
    #[error("skeleton does not parse: {0}")]
    Skeleton(#[from] ParseError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("index has no points")]
    NoPoints,
    #[error("index has {actual} points, more than max_points {max}")]
    TooManyPoints { actual: usize, max: usize },
    #[error("point has {actual} input(s), model expects {expected}")]
    InputWidth { actual: usize, expected: usize },
    #[error("skeleton needs {needed} positions, context holds {context}")]
    TooLong { needed: usize, context: usize },
}

/// Row-major features for a point set: squashed x components then squashed y.
pub fn point_features(points: &[crate::datagen::Point]) -> Vec<f64> {
    let mut out = Vec::new();
    for p in points {
        out.extend(p.x.iter().map(|&v| squash(v)));
        out.push(squash(p.y));
    }
    out
}

impl Example {
    pub fn from_index(
        index: &DatasetIndex,
        vocab: &TokenVocabulary,
        cfg: &ModelConfig,
    ) -> Result<Self, ExampleError> {
        let skeleton = parse_skeleton(&index.skeleton)?;
        let tokens = vocab.tokenize(&skeleton)?;
        Self::new(&index.points, tokens, cfg)
    }

    pub fn new(
        points: &[crate::datagen::Point],
        tokens: Vec<TokenId>,
        cfg: &ModelConfig,
    ) -> Result<Self, ExampleError> {
        if points.is_empty() {
            return Err(ExampleError::NoPoints);
        }
        if points.len() > cfg.max_points {
            return Err(ExampleError::TooManyPoints {
                actual: points.len(),
                max: cfg.max_points,
            });
        }
        if let Some(p) = points.iter().find(|p| p.x.len() != cfg.variable_count) {
            return Err(ExampleError::InputWidth {
                actual: p.x.len(),
                expected: cfg.variable_count,
            });
        }
        // conditioning slot + tokens; the end marker is predicted from the last token
        if tokens.len() + 1 > cfg.context_len {
            return Err(ExampleError::TooLong {
                needed: tokens.len() + 1,
                context: cfg.context_len,
            });
        }
        Ok(Example {
            features: point_features(points),
            n_points: points.len(),
            tokens,
        })
    }
}

/// Converts a dataset, tagging errors with the index ordinal.
pub fn examples_from_dataset(
    data: &[DatasetIndex],
    vocab: &TokenVocabulary,
    cfg: &ModelConfig,
) -> Result<Vec<Example>, (usize, ExampleError)> {
    data.iter()
        .enumerate()
        .map(|(i, ix)| Example::from_index(ix, vocab, cfg).map_err(|e| (i, e)))
        .collect()
}

/// Padded mini-batch: point sets padded to `max_points` with a validity
/// mask, targets padded to `context_len` with the pad token and a loss mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: usize,
    pub max_points: usize,
    pub input_dim: usize,
    pub context_len: usize,
    pub points: Vec<f64>,
    pub point_mask: Vec<bool>,
    pub targets: Vec<TokenId>,
    pub target_mask: Vec<bool>,
    pub start_id: TokenId,
}

/// Borrowed view of one batch row with padding stripped.
pub(crate) struct RowView {
    pub features: Vec<f64>,
    pub n_points: usize,
    /// Decoder inputs, starting with the start token.
    pub inputs: Vec<TokenId>,
    pub targets: Vec<TokenId>,
}

impl Batch {
    pub fn assemble(examples: &[&Example], vocab: &TokenVocabulary, cfg: &ModelConfig) -> Self {
        let rows = examples.len();
        let pin = cfg.input_dim();
        let mp = cfg.max_points;
        let t = cfg.context_len;
        let mut points = vec![0.0; rows * mp * pin];
        let mut point_mask = vec![false; rows * mp];
        let mut targets = vec![vocab.pad_id(); rows * t];
        let mut target_mask = vec![false; rows * t];
        for (r, ex) in examples.iter().enumerate() {
            points[r * mp * pin..r * mp * pin + ex.features.len()].copy_from_slice(&ex.features);
            point_mask[r * mp..r * mp + ex.n_points].fill(true);
            let seq = ex.tokens.iter().copied().chain(std::iter::once(vocab.end_id()));
            for (k, id) in seq.enumerate() {
                targets[r * t + k] = id;
                target_mask[r * t + k] = true;
            }
        }
        Batch {
            rows,
            max_points: mp,
            input_dim: pin,
            context_len: t,
            points,
            point_mask,
            targets,
            target_mask,
            start_id: vocab.start_id(),
        }
    }

    /// Number of unmasked target positions.
    pub fn target_count(&self) -> usize {
        self.target_mask.iter().filter(|m| **m).count()
    }

    pub(crate) fn row(&self, r: usize) -> RowView {
        let mp = self.max_points;
        let pin = self.input_dim;
        let mut features = Vec::new();
        let mut n_points = 0;
        for k in 0..mp {
            if self.point_mask[r * mp + k] {
                let base = (r * mp + k) * pin;
                features.extend_from_slice(&self.points[base..base + pin]);
                n_points += 1;
            }
        }
        let t = self.context_len;
        let targets: Vec<TokenId> = (0..t)
            .filter(|&k| self.target_mask[r * t + k])
            .map(|k| self.targets[r * t + k])
            .collect();
        let mut inputs = Vec::with_capacity(targets.len());
        inputs.push(self.start_id);
        inputs.extend_from_slice(&targets[..targets.len() - 1]);
        RowView {
            features,
            n_points,
            inputs,
            targets,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Point;

    #[test]
    fn masks_match_payload() {
        let cfg = ModelConfig {
            max_points: 4,
            context_len: 6,
            ..ModelConfig::desk()
        };
        let vocab = TokenVocabulary::new(1);
        let pts: Vec<Point> = (0..3).map(|i| Point { x: vec![i as f64], y: 1.0 }).collect();
        let ex = Example::new(&pts, vec![vocab.id(crate::expression::Token::Variable(0)).unwrap()], &cfg).unwrap();
        let b = Batch::assemble(&[&ex, &ex], &vocab, &cfg);
        assert_eq!(b.point_mask.iter().filter(|m| **m).count(), 6);
        assert_eq!(b.target_count(), 4);
        let row = b.row(1);
        assert_eq!(row.n_points, 3);
        assert_eq!(row.inputs, vec![vocab.start_id(), ex.tokens[0]]);
        assert_eq!(row.targets, vec![ex.tokens[0], vocab.end_id()]);
    }

    #[test]
    fn rejects_oversized_inputs() {
        let cfg = ModelConfig {
            max_points: 2,
            context_len: 3,
            ..ModelConfig::desk()
        };
        let pts: Vec<Point> = (0..3).map(|i| Point { x: vec![i as f64], y: 0.0 }).collect();
        assert!(matches!(
            Example::new(&pts, vec![1], &cfg),
            Err(ExampleError::TooManyPoints { .. })
        ));
        assert!(matches!(
            Example::new(&pts[..1], vec![1, 1, 1], &cfg),
            Err(ExampleError::TooLong { .. })
        ));
        assert!(matches!(Example::new(&[], vec![1], &cfg), Err(ExampleError::NoPoints)));
    }
}
