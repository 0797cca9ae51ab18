use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape of the encoder-decoder transformer. Encoder and decoder both have
/// `num_layers` blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub dropout_rate: f32,
}

impl ModelConfig {
    /// Two encoder and two decoder layers, width 64: memorizes a few hundred
    /// documents in minutes on one CPU core.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            num_layers: 2,
            d_model: 64,
            num_heads: 4,
            d_ff: 256,
            vocab_size,
            max_src_len: 32,
            max_tgt_len: 16,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.num_layers == 0 || self.d_model == 0 || self.num_heads == 0 || self.d_ff == 0 {
            return fail("layer count and widths must be positive");
        }
        if self.d_model % self.num_heads != 0 {
            return fail("d_model must be divisible by num_heads");
        }
        if self.vocab_size == 0 || self.max_src_len == 0 || self.max_tgt_len == 0 {
            return fail("vocab_size and sequence limits must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must be in [0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heads_must_divide_width() {
        let mut c = ModelConfig::desk(40);
        assert!(c.validate().is_ok());
        c.num_heads = 5;
        assert!(c.validate().is_err());
    }
}
