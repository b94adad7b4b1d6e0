use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LN_EPS: f32 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    /// Layers in each of the encoder and the decoder.
    pub n_layers: usize,
    pub d_ff: usize,
    /// Frame length: SOS + content + EOS + padding.
    pub max_len: usize,
    pub vocab_size: usize,
    /// Applied during training only.
    pub dropout: f32,
}

impl ModelConfig {
    pub fn desk_scale(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            d_ff: 128,
            max_len: 16,
            vocab_size,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return fail(format!("all sizes must be positive: {self:?}"));
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len < 3 {
            return fail(format!("max_len {} leaves no room for content", self.max_len));
        }
        if self.vocab_size < 4 {
            return fail(format!("vocab_size {} is too small", self.vocab_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Longest content that fits once SOS and EOS are added.
    pub fn max_content(&self) -> usize {
        self.max_len - 2
    }

    /// Closed-form parameter counts `(encoder, decoder)`.
    pub fn param_counts(&self) -> (usize, usize) {
        let (d, f, v) = (self.d_model, self.d_ff, self.vocab_size);
        let ln = 2 * d;
        let attn = 4 * d * d + 4 * d;
        let ff = d * f + f + f * d + d;
        let enc = v * d + self.n_layers * (2 * ln + attn + ff) + ln;
        let dec = v * d + self.n_layers * (3 * ln + 2 * attn + ff) + ln + d * v + v;
        (enc, dec)
    }
}
