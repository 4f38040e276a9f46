//! Symbolic-regression workbench.
//!
//! The pipeline has three stages: a permutation-invariant encoder turns a
//! point set into an embedding, an autoregressive decoder emits an equation
//! skeleton in prefix notation, and a multi-start least-squares fit fills in
//! the skeleton's constants. Around it sit a synthetic data generator and the
//! two training protocols compared here: a seeded 80/20 split and k-fold
//! cross-validation.

pub mod constopt;
pub mod datagen;
pub mod eval;
pub mod expression;
pub mod kfold;
pub mod model;
pub mod seed;

pub use constopt::{fit_constants, FitBudget, FitResult};
pub use datagen::{DatasetIndex, GrammarConfig};
pub use expression::{evaluate, parse, print, skeletonize, substitute, Expression, Skeleton, TokenVocabulary};
pub use kfold::{relative_improvement, FoldAssignment, LossSummary};
pub use model::{ModelConfig, ModelParams};
