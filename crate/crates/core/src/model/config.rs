use serde::{Deserialize, Serialize};

use crate::chunk::{AttentionSchema, BlockOptions};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Architecture of a model. Stored verbatim in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the stored behavior embeddings (`d_b`).
    pub behavior_dim: usize,
    /// Width of the target item embedding (`d_t`).
    pub target_dim: usize,
    /// Width of the user profile embedding (`d_u`).
    pub user_dim: usize,
    /// Model width `d` inside the transformer blocks.
    pub dim: usize,
    pub chunk_size: usize,
    pub hash_bits: usize,
    /// Total transformer blocks `T`; must be even.
    pub blocks: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub target_hidden: usize,
    pub head_hidden: usize,
    pub schema: AttentionSchema,
    /// Behaviors beyond this many most recent items are dropped.
    pub max_len: Option<usize>,
    pub ln_eps: f64,
    pub init_std: f64,
    pub seed: u64,
    pub hash_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("behavior_dim", self.behavior_dim),
            ("target_dim", self.target_dim),
            ("user_dim", self.user_dim),
            ("dim", self.dim),
            ("heads", self.heads),
            ("mlp_hidden", self.mlp_hidden),
            ("target_hidden", self.target_hidden),
            ("head_hidden", self.head_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.blocks == 0 || self.blocks % 2 != 0 {
            return Err(Error::Config(format!("blocks must be even and positive, got {}", self.blocks)));
        }
        if self.chunk_size < 2 || self.chunk_size % 2 != 0 {
            return Err(Error::Config(format!("chunk_size must be even and >= 2, got {}", self.chunk_size)));
        }
        if self.hash_bits == 0 || self.hash_bits > crate::lsh::MAX_HASH_BITS {
            return Err(Error::Config(format!("hash_bits out of range: {}", self.hash_bits)));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!("dim {} not divisible by heads {}", self.dim, self.heads)));
        }
        if self.max_len == Some(0) {
            return Err(Error::Config("max_len must be positive".into()));
        }
        if !(self.ln_eps > 0.0 && self.init_std > 0.0) {
            return Err(Error::Config("ln_eps and init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn block_options(&self) -> BlockOptions {
        BlockOptions { heads: self.heads, eps: self.ln_eps }
    }
}

/// Flat training configuration; file keys and `key=value` overrides map
/// directly onto these fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub chunk_size: usize,
    pub hash_bits: usize,
    pub blocks: usize,
    pub heads: usize,
    /// Defaults to `4 * dim`.
    pub mlp_hidden: Option<usize>,
    /// Defaults to `dim`.
    pub target_hidden: Option<usize>,
    pub head_hidden: usize,
    pub schema: AttentionSchema,
    pub max_len: Option<usize>,
    pub ln_eps: f64,
    pub init_std: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            chunk_size: 8,
            hash_bits: 4,
            blocks: 4,
            heads: 1,
            mlp_hidden: None,
            target_hidden: None,
            head_hidden: 32,
            schema: AttentionSchema::ShiftedChunk,
            max_len: None,
            ln_eps: 1e-5,
            init_std: 0.02,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            steps: 600,
            eval_every: 100,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Model architecture for data with the given embedding widths.
    pub fn model_config(&self, behavior_dim: usize, target_dim: usize, user_dim: usize) -> ModelConfig {
        ModelConfig {
            behavior_dim,
            target_dim,
            user_dim,
            dim: self.dim,
            chunk_size: self.chunk_size,
            hash_bits: self.hash_bits,
            blocks: self.blocks,
            heads: self.heads,
            mlp_hidden: self.mlp_hidden.unwrap_or(4 * self.dim),
            target_hidden: self.target_hidden.unwrap_or(self.dim),
            head_hidden: self.head_hidden,
            schema: self.schema,
            max_len: self.max_len,
            ln_eps: self.ln_eps,
            init_std: self.init_std,
            seed: self.seed,
            hash_seed: self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"dimm": 3}"#).unwrap_err();
        assert!(err.to_string().contains("dimm"));
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let c: TrainConfig = serde_json::from_str(r#"{"dim": 16, "schema": "g-sa"}"#).unwrap();
        assert_eq!(c.dim, 16);
        assert_eq!(c.schema, AttentionSchema::Global);
        let m = c.model_config(32, 32, 8);
        assert_eq!(m.mlp_hidden, 64);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn odd_blocks_rejected() {
        let c = TrainConfig { blocks: 3, ..Default::default() };
        assert!(c.model_config(4, 4, 4).validate().is_err());
    }
}
