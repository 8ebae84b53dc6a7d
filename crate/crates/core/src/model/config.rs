use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters of the decoder-only transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub n_reserved_pst: usize,
    pub rope_theta: f64,
    pub norm_eps: f32,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// The desk-scale reference model: 16 layers, width 128.
    fn default() -> Self {
        Self {
            n_layers: 16,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            vocab_size: 2048,
            n_reserved_pst: 4,
            rope_theta: 10000.0,
            norm_eps: 1e-5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Rows of the embedding table: vocabulary plus placeholder slots.
    pub fn embedding_rows(&self) -> usize {
        self.vocab_size + self.n_reserved_pst
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.head_dim() % 2 != 0 {
            return fail(format!("head dim {} must be even", self.head_dim()));
        }
        if self.d_ff == 0 {
            return fail("d_ff must be at least 1".into());
        }
        if self.vocab_size < 256 {
            return fail(format!("vocab_size {} is below the byte alphabet", self.vocab_size));
        }
        if self.n_reserved_pst == 0 {
            return fail("n_reserved_pst must be at least 1".into());
        }
        if !(self.rope_theta > 0.0) || !self.rope_theta.is_finite() {
            return fail(format!("rope_theta must be positive, got {}", self.rope_theta));
        }
        if !(self.norm_eps > 0.0) || !self.norm_eps.is_finite() {
            return fail(format!("norm_eps must be positive, got {}", self.norm_eps));
        }
        Ok(())
    }
}
