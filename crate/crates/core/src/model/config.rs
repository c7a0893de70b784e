use serde::{Deserialize, Serialize};

use crate::chess::VOCAB_SIZE;
use crate::encoding::{AUX_DIM, INPUT_CHANNELS};

/// Architecture hyperparameters. Defaults are the full-size network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub mid_channels: usize,
    pub patch_channels: usize,
    pub conv_blocks: usize,
    pub attention_blocks: usize,
    pub skill_dim: usize,
    pub attention_dim: usize,
    pub head_dim: usize,
    pub heads: usize,
    pub buckets: usize,
    pub vocab_size: usize,
    pub aux_dim: usize,
    /// `false` selects the variant that concatenates skill embeddings with
    /// the flattened backbone output instead of using skill-aware attention.
    pub skill_attention: bool,
    /// `false` drops the auxiliary head and its loss term.
    pub aux_head: bool,
    pub policy_weight: f64,
    pub aux_weight: f64,
    pub value_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: INPUT_CHANNELS,
            mid_channels: 256,
            patch_channels: 8,
            conv_blocks: 12,
            attention_blocks: 2,
            skill_dim: 128,
            attention_dim: 1024,
            head_dim: 64,
            heads: 16,
            buckets: 11,
            vocab_size: VOCAB_SIZE,
            aux_dim: AUX_DIM,
            skill_attention: true,
            aux_head: true,
            policy_weight: 1.0,
            aux_weight: 1.0,
            value_weight: 1.0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for desk-scale runs and tests.
    pub fn toy() -> ModelConfig {
        ModelConfig {
            mid_channels: 16,
            conv_blocks: 2,
            attention_blocks: 1,
            skill_dim: 16,
            attention_dim: 32,
            head_dim: 8,
            heads: 4,
            ..ModelConfig::default()
        }
    }

    pub fn without_attention(mut self) -> ModelConfig {
        self.skill_attention = false;
        self
    }

    pub fn without_aux(mut self) -> ModelConfig {
        self.aux_head = false;
        self
    }

    /// Width of the flattened representation feeding the heads.
    pub fn feature_dim(&self) -> usize {
        if self.skill_attention {
            self.patch_channels * self.attention_dim
        } else {
            self.patch_channels * 64 + 2 * self.skill_dim
        }
    }

    pub fn projection_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.attention_dim
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input_channels != INPUT_CHANNELS {
            return Err(format!("input_channels must be {INPUT_CHANNELS}"));
        }
        if self.vocab_size != VOCAB_SIZE {
            return Err(format!("vocab_size must be {VOCAB_SIZE}"));
        }
        if self.aux_dim != AUX_DIM {
            return Err(format!("aux_dim must be {AUX_DIM}"));
        }
        let sizes = [
            ("mid_channels", self.mid_channels),
            ("patch_channels", self.patch_channels),
            ("skill_dim", self.skill_dim),
            ("attention_dim", self.attention_dim),
            ("head_dim", self.head_dim),
            ("heads", self.heads),
            ("buckets", self.buckets),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        for (name, w) in [
            ("policy_weight", self.policy_weight),
            ("aux_weight", self.aux_weight),
            ("value_weight", self.value_weight),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}
