//! Model configuration.

use serde::{Deserialize, Serialize};

use crate::depth::DepthEncoderConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyStDiTConfig {
    pub d_model: usize,
    /// Even count; blocks alternate spatial, temporal, spatial, ...
    pub num_base_blocks: usize,
    /// Requested control-branch depth; clamped to num_base_blocks.
    pub num_control_blocks: usize,
    /// Patch size p; token count per frame is (h/p)(w/p).
    pub patch: usize,
    pub views: usize,
    /// Diffusion chain length N.
    pub diffusion_steps: usize,
    pub noise_schedule: String,
    /// Probability of keeping frame 0 clean (timestep 0) during training.
    pub first_frame_clean_prob: f64,
    pub seed: u64,
    /// Latent channel count.
    pub channels: usize,
    /// Fixed sinusoidal position embeddings over space and time.
    pub use_pos_embed: bool,
    pub depth_encoder: DepthEncoderConfig,
}

impl Default for ToyStDiTConfig {
    fn default() -> Self {
        ToyStDiTConfig {
            d_model: 32,
            num_base_blocks: 4,
            num_control_blocks: 13,
            patch: 2,
            views: 1,
            diffusion_steps: 50,
            noise_schedule: "linear".into(),
            first_frame_clean_prob: 0.2,
            seed: 0,
            channels: 4,
            use_pos_embed: true,
            depth_encoder: DepthEncoderConfig {
                d_model: 32,
                ..DepthEncoderConfig::default()
            },
        }
    }
}

/// Block flavor: which axis self-attention runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Spatial,
    Temporal,
}

impl ToyStDiTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 {
            return Err(Error::InvalidConfig("d_model must be positive".into()));
        }
        if self.num_base_blocks == 0 || !self.num_base_blocks.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "num_base_blocks must be even and positive, got {}",
                self.num_base_blocks
            )));
        }
        if self.patch == 0 {
            return Err(Error::InvalidConfig("patch must be positive".into()));
        }
        if self.views == 0 {
            return Err(Error::InvalidConfig("views must be positive".into()));
        }
        if self.diffusion_steps == 0 {
            return Err(Error::InvalidConfig("diffusion_steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.first_frame_clean_prob) {
            return Err(Error::InvalidConfig(format!(
                "first_frame_clean_prob must lie in [0, 1], got {}",
                self.first_frame_clean_prob
            )));
        }
        if self.depth_encoder.d_model != self.d_model {
            return Err(Error::InvalidConfig(format!(
                "depth encoder width {} must match d_model {}",
                self.depth_encoder.d_model, self.d_model
            )));
        }
        Ok(())
    }

    /// Control-branch depth after clamping to the base stack.
    pub fn effective_control_blocks(&self) -> usize {
        self.num_control_blocks.min(self.num_base_blocks)
    }

    /// Alternating spatial/temporal kinds, spatial first.
    pub fn block_kinds(&self) -> Vec<BlockKind> {
        (0..self.num_base_blocks)
            .map(|i| if i % 2 == 0 { BlockKind::Spatial } else { BlockKind::Temporal })
            .collect()
    }

    /// Flattened patch dimension p*p*c.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ToyStDiTConfig::default().validate().unwrap();
    }

    #[test]
    fn block_kinds_alternate() {
        let cfg = ToyStDiTConfig { num_base_blocks: 4, ..Default::default() };
        assert_eq!(
            cfg.block_kinds(),
            vec![BlockKind::Spatial, BlockKind::Temporal, BlockKind::Spatial, BlockKind::Temporal]
        );
    }

    #[test]
    fn control_depth_clamps_to_base_depth() {
        let cfg = ToyStDiTConfig { num_base_blocks: 4, num_control_blocks: 13, ..Default::default() };
        assert_eq!(cfg.effective_control_blocks(), 4);
    }

    #[test]
    fn odd_block_count_rejected() {
        let cfg = ToyStDiTConfig { num_base_blocks: 3, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn out_of_range_clean_prob_rejected() {
        let cfg = ToyStDiTConfig { first_frame_clean_prob: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
