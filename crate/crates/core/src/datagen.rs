//! Synthetic dataset generation and the JSONL dataset format.
//!
//! One line of a dataset file is one index: a point set sampled from a
//! random equation plus the equation text and its skeleton.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expression::{
    evaluate, parse, round_significant, skeletonize, BinaryOp, Expression, Node, UnaryOp,
};
use crate::seed::{derive_seed, rng, Rng};

/// Largest |y| accepted for a sampled point.
pub const OVERFLOW_CAP: f64 = 1e6;
/// Extra draws allowed for a single point before the expression is rejected.
pub const POINT_RESAMPLES: usize = 100;
/// Attempts to draw an expression containing a variable.
pub const EXPRESSION_RETRIES: usize = 1000;
/// Expressions tried per dataset ordinal before generation gives up.
pub const INDEX_ATTEMPTS: usize = 10_000;

/// Relative production weights for the expression sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorWeights {
    pub variable: f64,
    pub constant: f64,
    pub add: f64,
    pub sub: f64,
    pub mul: f64,
    pub div: f64,
    pub pow: f64,
    pub sin: f64,
    pub cos: f64,
    pub log: f64,
    pub exp: f64,
    pub neg: f64,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        OperatorWeights {
            variable: 3.0,
            constant: 1.5,
            add: 1.0,
            sub: 0.6,
            mul: 1.0,
            div: 0.4,
            pow: 0.4,
            sin: 0.5,
            cos: 0.5,
            log: 0.25,
            exp: 0.25,
            neg: 0.15,
        }
    }
}

impl OperatorWeights {
    fn all(&self) -> [f64; 12] {
        [
            self.variable,
            self.constant,
            self.add,
            self.sub,
            self.mul,
            self.div,
            self.pow,
            self.sin,
            self.cos,
            self.log,
            self.exp,
            self.neg,
        ]
    }
}

/// Settings for the expression sampler and point sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    /// Maximum tree depth in nodes (a lone leaf has depth 1).
    pub max_depth: usize,
    pub weights: OperatorWeights,
    pub constant_range: (f64, f64),
    /// Inclusive range of points per index.
    pub points_range: (usize, usize),
    pub x_range: (f64, f64),
    pub variable_count: usize,
    /// Inclusive integer exponent range for generated powers.
    pub exponent_range: (i32, i32),
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            max_depth: 4,
            weights: OperatorWeights::default(),
            constant_range: (-5.0, 5.0),
            points_range: (30, 200),
            x_range: (-3.0, 3.0),
            variable_count: 1,
            exponent_range: (2, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("operator weights must be finite and non-negative")]
    NegativeWeight,
    #[error("operator weights are all zero")]
    AllZeroWeights,
    #[error("the variable production has zero weight, so no expression can contain a variable")]
    NoVariableProduction,
    #[error("degenerate range for {0}")]
    DegenerateRange(&'static str),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = self.weights.all();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ConfigError::NegativeWeight);
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(ConfigError::AllZeroWeights);
        }
        if self.weights.variable == 0.0 {
            return Err(ConfigError::NoVariableProduction);
        }
        if self.max_depth == 0 {
            return Err(ConfigError::NonPositive("max_depth"));
        }
        if self.variable_count == 0 {
            return Err(ConfigError::NonPositive("variable_count"));
        }
        let (c_lo, c_hi) = self.constant_range;
        if !(c_lo.is_finite() && c_hi.is_finite() && c_lo < c_hi) {
            return Err(ConfigError::DegenerateRange("constant_range"));
        }
        let (x_lo, x_hi) = self.x_range;
        if !(x_lo.is_finite() && x_hi.is_finite() && x_lo < x_hi) {
            return Err(ConfigError::DegenerateRange("x_range"));
        }
        let (p_lo, p_hi) = self.points_range;
        if p_lo == 0 || p_lo > p_hi {
            return Err(ConfigError::DegenerateRange("points_range"));
        }
        let (e_lo, e_hi) = self.exponent_range;
        if e_lo > e_hi {
            return Err(ConfigError::DegenerateRange("exponent_range"));
        }
        Ok(())
    }
}

/// One sampled input/output pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: f64,
}

/// One dataset record: points, ground-truth equation and its skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexWire", into = "IndexWire")]
pub struct DatasetIndex {
    pub points: Vec<Point>,
    pub eq: String,
    pub skeleton: String,
}

#[derive(Serialize, Deserialize)]
struct IndexWire {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    eq: String,
    skeleton: String,
}

impl From<DatasetIndex> for IndexWire {
    fn from(ix: DatasetIndex) -> Self {
        let (x, y) = ix.points.into_iter().map(|p| (p.x, p.y)).unzip();
        IndexWire {
            x,
            y,
            eq: ix.eq,
            skeleton: ix.skeleton,
        }
    }
}

impl TryFrom<IndexWire> for DatasetIndex {
    type Error = String;

    fn try_from(w: IndexWire) -> Result<Self, Self::Error> {
        if w.x.len() != w.y.len() {
            return Err(format!("|x| = {} but |y| = {}", w.x.len(), w.y.len()));
        }
        let points = w.x.into_iter().zip(w.y).map(|(x, y)| Point { x, y }).collect();
        Ok(DatasetIndex {
            points,
            eq: w.eq,
            skeleton: w.skeleton,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexInvariant {
    #[error("non-finite y at point {0}")]
    NonFiniteY(usize),
    #[error("point {point} has {actual} input(s), expected {expected}")]
    InputWidth {
        point: usize,
        actual: usize,
        expected: usize,
    },
    #[error("x at point {0} outside the sampling range")]
    OutOfRange(usize),
    #[error("{0} points outside the configured range")]
    PointCount(usize),
    #[error("equation does not parse: {0}")]
    Equation(String),
    #[error("stored skeleton `{stored}` differs from derived `{derived}`")]
    Skeleton { stored: String, derived: String },
}

impl DatasetIndex {
    pub fn expression(&self) -> Result<Expression, IndexInvariant> {
        parse(&self.eq).map_err(|e| IndexInvariant::Equation(e.to_string()))
    }

    /// Format-level invariants that hold regardless of the generator settings.
    pub fn validate(&self) -> Result<(), IndexInvariant> {
        let expr = self.expression()?;
        let derived = skeletonize(&expr).0.to_string();
        if derived != self.skeleton {
            return Err(IndexInvariant::Skeleton {
                stored: self.skeleton.clone(),
                derived,
            });
        }
        let width = self.points.first().map_or(0, |p| p.x.len());
        for (i, p) in self.points.iter().enumerate() {
            if !p.y.is_finite() {
                return Err(IndexInvariant::NonFiniteY(i));
            }
            if p.x.len() != width {
                return Err(IndexInvariant::InputWidth {
                    point: i,
                    actual: p.x.len(),
                    expected: width,
                });
            }
        }
        Ok(())
    }

    /// Full invariants against the generator settings.
    pub fn validate_against(&self, cfg: &GrammarConfig) -> Result<(), IndexInvariant> {
        self.validate()?;
        let (lo, hi) = cfg.points_range;
        if self.points.len() < lo || self.points.len() > hi {
            return Err(IndexInvariant::PointCount(self.points.len()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.x.len() != cfg.variable_count {
                return Err(IndexInvariant::InputWidth {
                    point: i,
                    actual: p.x.len(),
                    expected: cfg.variable_count,
                });
            }
            if p.x.iter().any(|&v| v < cfg.x_range.0 || v > cfg.x_range.1) {
                return Err(IndexInvariant::OutOfRange(i));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no expression with a variable after {0} retries")]
    NoVariable(usize),
    #[error("expression rejected: a point faulted {0} times in a row")]
    Rejected(usize),
    #[error("ordinal {ordinal}: no acceptable expression after {attempts} attempts")]
    Exhausted { ordinal: usize, attempts: usize },
}

#[derive(Clone, Copy)]
enum Production {
    Variable,
    Constant,
    Binary(BinaryOp),
    Unary(UnaryOp),
}

fn productions(w: &OperatorWeights, leaves_only: bool) -> Vec<(Production, f64)> {
    let mut out = vec![
        (Production::Variable, w.variable),
        (Production::Constant, w.constant),
    ];
    if !leaves_only {
        out.extend([
            (Production::Binary(BinaryOp::Add), w.add),
            (Production::Binary(BinaryOp::Sub), w.sub),
            (Production::Binary(BinaryOp::Mul), w.mul),
            (Production::Binary(BinaryOp::Div), w.div),
            (Production::Binary(BinaryOp::Pow), w.pow),
            (Production::Unary(UnaryOp::Sin), w.sin),
            (Production::Unary(UnaryOp::Cos), w.cos),
            (Production::Unary(UnaryOp::Log), w.log),
            (Production::Unary(UnaryOp::Exp), w.exp),
            (Production::Unary(UnaryOp::Neg), w.neg),
        ]);
    }
    out.retain(|(_, weight)| *weight > 0.0);
    out
}

fn pick(rng: &mut Rng, table: &[(Production, f64)]) -> Production {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (p, w) in table {
        if u < *w {
            return *p;
        }
        u -= w;
    }
    table.last().expect("validated non-empty").0
}

struct Sampler<'a> {
    cfg: &'a GrammarConfig,
    inner: Vec<(Production, f64)>,
    leaves: Vec<(Production, f64)>,
}

impl Sampler<'_> {
    fn grow(&self, rng: &mut Rng, depth: usize) -> Expression {
        let table = if depth >= self.cfg.max_depth {
            &self.leaves
        } else {
            &self.inner
        };
        match pick(rng, table) {
            Production::Variable => {
                Expression::variable(rng.random_range(0..self.cfg.variable_count))
            }
            Production::Constant => Expression::constant(sample_constant(rng, self.cfg)),
            Production::Unary(op) => Node::unary(op, self.grow(rng, depth + 1)),
            Production::Binary(BinaryOp::Pow) => {
                let base = self.grow(rng, depth + 1);
                let (lo, hi) = self.cfg.exponent_range;
                let exponent = rng.random_range(lo..=hi) as f64;
                Node::binary(BinaryOp::Pow, base, Expression::constant(exponent))
            }
            Production::Binary(op) => {
                let l = self.grow(rng, depth + 1);
                let r = self.grow(rng, depth + 1);
                Node::binary(op, l, r)
            }
        }
    }
}

/// Constants are drawn uniformly and rounded to the printed precision, so the
/// equation text reproduces the sampled values exactly.
fn sample_constant(rng: &mut Rng, cfg: &GrammarConfig) -> f64 {
    let (lo, hi) = cfg.constant_range;
    round_significant(rng.random_range(lo..hi))
}

/// Draws a random expression tree containing at least one variable.
pub fn sample_expression(cfg: &GrammarConfig, seed: u64) -> Result<Expression, GenerationError> {
    cfg.validate()?;
    let sampler = Sampler {
        cfg,
        inner: productions(&cfg.weights, false),
        leaves: productions(&cfg.weights, true),
    };
    let mut rng = rng(seed);
    for _ in 0..EXPRESSION_RETRIES {
        let expr = sampler.grow(&mut rng, 1);
        if expr.has_variable() {
            return Ok(expr);
        }
    }
    Err(GenerationError::NoVariable(EXPRESSION_RETRIES))
}

/// Samples the point set for `expr`. Points that fault or exceed the
/// overflow cap are redrawn; a point that keeps failing rejects the
/// expression.
pub fn generate_index(
    expr: &Expression,
    cfg: &GrammarConfig,
    seed: u64,
) -> Result<DatasetIndex, GenerationError> {
    cfg.validate()?;
    let mut rng = rng(seed);
    let (p_lo, p_hi) = cfg.points_range;
    let count = rng.random_range(p_lo..=p_hi);
    let (x_lo, x_hi) = cfg.x_range;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..=POINT_RESAMPLES {
            let x: Vec<f64> = (0..cfg.variable_count)
                .map(|_| rng.random_range(x_lo..=x_hi))
                .collect();
            match evaluate(expr, &x) {
                Ok(y) if y.abs() <= OVERFLOW_CAP => {
                    accepted = Some(Point { x, y });
                    break;
                }
                _ => {}
            }
        }
        points.push(accepted.ok_or(GenerationError::Rejected(POINT_RESAMPLES + 1))?);
    }
    Ok(DatasetIndex {
        points,
        eq: crate::expression::print(expr),
        skeleton: skeletonize(expr).0.to_string(),
    })
}

/// Counts from a dataset generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerationStats {
    pub accepted: usize,
    pub rejected: usize,
}

impl GenerationStats {
    pub fn rejection_rate(&self) -> f64 {
        let total = self.accepted + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.rejected as f64 / total as f64
        }
    }
}

/// Generates the index at `ordinal` under `master_seed`, returning it with
/// the number of rejected expressions.
pub fn generate_ordinal(
    cfg: &GrammarConfig,
    master_seed: u64,
    ordinal: usize,
) -> Result<(DatasetIndex, usize), GenerationError> {
    let base = derive_seed(master_seed, ordinal as u64);
    for attempt in 0..INDEX_ATTEMPTS as u64 {
        let expr = sample_expression(cfg, derive_seed(base, 2 * attempt))?;
        match generate_index(&expr, cfg, derive_seed(base, 2 * attempt + 1)) {
            Ok(ix) => return Ok((ix, attempt as usize)),
            Err(GenerationError::Rejected(_)) => continue,
            Err(other) => return Err(other),
        }
    }
    Err(GenerationError::Exhausted {
        ordinal,
        attempts: INDEX_ATTEMPTS,
    })
}

/// Generates `count` indices. Ordinals are independent, so the result is the
/// same whether they run in parallel or not.
pub fn generate_dataset(
    cfg: &GrammarConfig,
    count: usize,
    master_seed: u64,
) -> Result<(Vec<DatasetIndex>, GenerationStats), GenerationError> {
    cfg.validate()?;
    let results: Vec<_> = (0..count)
        .into_par_iter()
        .map(|i| generate_ordinal(cfg, master_seed, i))
        .collect();
    let mut stats = GenerationStats::default();
    let mut out = Vec::with_capacity(count);
    for r in results {
        let (ix, rejected) = r?;
        stats.accepted += 1;
        stats.rejected += rejected;
        out.push(ix);
    }
    Ok((out, stats))
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invariant {
        line: usize,
        #[source]
        source: IndexInvariant,
    },
    #[error("cannot keep {target} of {available} indices")]
    TargetTooLarge { target: usize, available: usize },
}

/// Writes one JSON object per line.
pub fn write_dataset(indices: &[DatasetIndex], path: &Path) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for ix in indices {
        let line = serde_json::to_string(ix).expect("dataset index serializes");
        out.write_all(line.as_bytes()).map_err(io)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

const REQUIRED_FIELDS: [&str; 4] = ["x", "y", "eq", "skeleton"];

fn parse_line(text: &str, line: usize) -> Result<DatasetIndex, DatasetError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DatasetError::Malformed {
            line,
            message: e.to_string(),
        })?;
    let obj = value.as_object().ok_or_else(|| DatasetError::Schema {
        line,
        message: "expected a JSON object".into(),
    })?;
    if let Some(field) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(DatasetError::MissingField {
            line,
            field: field.to_string(),
        });
    }
    let ix: DatasetIndex = serde_json::from_value(value).map_err(|e| DatasetError::Schema {
        line,
        message: e.to_string(),
    })?;
    ix.validate()
        .map_err(|source| DatasetError::Invariant { line, source })?;
    Ok(ix)
}

/// Reads a JSONL dataset. Line numbers in errors are 1-based.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetIndex>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        out.push(parse_line(&line, i + 1)?);
    }
    Ok(out)
}

/// Uniform sample without replacement, keeping source order.
pub fn subsample(
    dataset: &[DatasetIndex],
    target: usize,
    seed: u64,
) -> Result<Vec<DatasetIndex>, DatasetError> {
    Ok(subsample_positions(dataset.len(), target, seed)?
        .into_iter()
        .map(|i| dataset[i].clone())
        .collect())
}

/// Positions kept by [`subsample`], ascending.
pub fn subsample_positions(
    available: usize,
    target: usize,
    seed: u64,
) -> Result<Vec<usize>, DatasetError> {
    if target > available {
        return Err(DatasetError::TargetTooLarge { target, available });
    }
    let mut picked = index::sample(&mut rng(seed), available, target).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Percentage decrease from `from` to `to` indices.
pub fn reduction_percent(from: usize, to: usize) -> f64 {
    (from as f64 - to as f64) / from as f64 * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variable_only(max_depth: usize) -> GrammarConfig {
        let mut weights = OperatorWeights {
            variable: 1.0,
            constant: 0.0,
            add: 0.0,
            sub: 0.0,
            mul: 0.0,
            div: 0.0,
            pow: 0.0,
            sin: 0.0,
            cos: 0.0,
            log: 0.0,
            exp: 0.0,
            neg: 0.0,
        };
        weights.variable = 1.0;
        GrammarConfig {
            max_depth,
            weights,
            ..GrammarConfig::default()
        }
    }

    #[test]
    fn forced_leaf_is_the_variable() {
        let e = sample_expression(&variable_only(1), 3).unwrap();
        assert_eq!(crate::expression::print(&e), "x1");
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = GrammarConfig::default();
        assert_eq!(
            sample_expression(&cfg, 99).unwrap(),
            sample_expression(&cfg, 99).unwrap()
        );
    }

    #[test]
    fn thousand_samples_respect_depth_and_contain_a_variable() {
        let cfg = GrammarConfig::default();
        for seed in 0..1000 {
            let e = sample_expression(&cfg, seed).unwrap();
            assert!(e.has_variable());
            assert!(e.depth() <= cfg.max_depth, "depth {} for seed {seed}", e.depth());
        }
    }

    #[test]
    fn identity_points() {
        let cfg = GrammarConfig {
            points_range: (5, 5),
            x_range: (-1.0, 1.0),
            ..GrammarConfig::default()
        };
        let ix = generate_index(&parse("x1").unwrap(), &cfg, 1).unwrap();
        assert_eq!(ix.points.len(), 5);
        for p in &ix.points {
            assert_eq!(p.y, p.x[0]);
            assert!((-1.0..=1.0).contains(&p.x[0]));
        }
    }

    #[test]
    fn log_of_negative_range_is_rejected() {
        let cfg = GrammarConfig {
            x_range: (-3.0, -1.0),
            ..GrammarConfig::default()
        };
        assert!(matches!(
            generate_index(&parse("log(x1)").unwrap(), &cfg, 1),
            Err(GenerationError::Rejected(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = GrammarConfig::default();
        cfg.constant_range = (1.0, 1.0);
        assert_eq!(cfg.validate(), Err(ConfigError::DegenerateRange("constant_range")));
        let mut cfg = GrammarConfig::default();
        cfg.weights.sin = -1.0;
        assert_eq!(cfg.validate(), Err(ConfigError::NegativeWeight));
        let mut cfg = variable_only(3);
        cfg.weights.variable = 0.0;
        assert_eq!(cfg.validate(), Err(ConfigError::AllZeroWeights));
    }

    #[test]
    fn subsample_edges() {
        let cfg = GrammarConfig {
            points_range: (3, 3),
            ..GrammarConfig::default()
        };
        let (data, _) = generate_dataset(&cfg, 20, 5).unwrap();
        assert_eq!(subsample(&data, 20, 1).unwrap(), data);
        assert_eq!(subsample(&data, 7, 1).unwrap(), subsample(&data, 7, 1).unwrap());
        assert!(matches!(
            subsample(&data, 21, 1),
            Err(DatasetError::TargetTooLarge { .. })
        ));
        let kept = subsample_positions(20, 7, 3).unwrap();
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn paper_reduction_is_ninety_seven_percent() {
        let pct = reduction_percent(500_000, 15_000);
        assert!((pct - 97.0).abs() < 1e-12);
    }
}
