use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Decoder positions, including the conditioning slot at position 0.
    pub context_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Width that point sets are padded to.
    pub max_points: usize,
    pub variable_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}` (expected desk or paper)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelConfigError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("embed_dim {embed_dim} is not divisible by heads {heads}")]
    HeadSplit { embed_dim: usize, heads: usize },
    #[error("context_len must be at least 2")]
    ContextTooShort,
    #[error("learning_rate must be finite and non-negative")]
    LearningRate,
    #[error("dropout must lie in [0, 1)")]
    Dropout,
}

impl ModelConfig {
    /// Single-workstation configuration.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 64,
            layers: 2,
            heads: 4,
            context_len: 32,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            dropout: 0.0,
            seed: 0,
            max_points: 200,
            variable_count: 1,
        }
    }

    /// The published training scale: 20 epochs, batch 128, embedding 512.
    pub fn paper() -> Self {
        ModelConfig {
            embed_dim: 512,
            layers: 8,
            heads: 8,
            context_len: 64,
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 20,
            dropout: 0.1,
            seed: 0,
            max_points: 200,
            variable_count: 1,
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.embed_dim
    }

    /// Per-point input features: the x components followed by y.
    pub fn input_dim(&self) -> usize {
        self.variable_count + 1
    }

    pub fn validate(&self) -> Result<(), ModelConfigError> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("max_points", self.max_points),
            ("variable_count", self.variable_count),
        ] {
            if v == 0 {
                return Err(ModelConfigError::NonPositive(name));
            }
        }
        if self.embed_dim % self.heads != 0 {
            return Err(ModelConfigError::HeadSplit {
                embed_dim: self.embed_dim,
                heads: self.heads,
            });
        }
        if self.context_len < 2 {
            return Err(ModelConfigError::ContextTooShort);
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ModelConfigError::LearningRate);
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelConfigError::Dropout);
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of the configuration and vocabulary.
    pub fn hash_with_vocabulary(&self, vocabulary: &[String]) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.update(b"\0");
        h.update(serde_json::to_vec(vocabulary).expect("vocabulary serializes"));
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
