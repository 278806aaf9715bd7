use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the toy multimodal decoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub image_size: usize,
    pub patch_size: usize,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            head_dim: 16,
            ffn_dim: 128,
            vocab_size: super::Vocab::standard().len(),
            image_size: 32,
            patch_size: 8,
            max_seq_len: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_heads * self.head_dim != self.d_model {
            return bad(format!(
                "n_heads ({}) x head_dim ({}) != d_model ({})",
                self.n_heads, self.head_dim, self.d_model
            ));
        }
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        let positive = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.max_seq_len <= self.visual_tokens() {
            return bad(format!(
                "max_seq_len {} leaves no room after {} visual tokens",
                self.max_seq_len,
                self.visual_tokens()
            ));
        }
        Ok(())
    }

    /// Visual token grid `(rows, cols)`.
    pub fn grid(&self) -> (usize, usize) {
        let g = self.image_size / self.patch_size;
        (g, g)
    }

    pub fn visual_tokens(&self) -> usize {
        let (r, c) = self.grid();
        r * c
    }

    /// Length of one flattened RGB patch.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.grid(), (4, 4));
        assert_eq!(c.visual_tokens(), 16);
        assert_eq!(c.patch_dim(), 192);
    }

    #[test]
    fn head_product_must_match() {
        let c = ModelConfig {
            head_dim: 8,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn patch_must_divide_image() {
        let c = ModelConfig {
            patch_size: 7,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
