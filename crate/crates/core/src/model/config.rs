use serde::{Deserialize, Serialize};

use crate::autograd::{DEFAULT_EPS, DEFAULT_MOMENTUM};
use crate::error::{Error, Result};

/// Network widths and the three ablation switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub adaptor_channels: usize,
    /// Encoder widths, shallow to deep. Each level halves the resolution;
    /// the deepest width is also the fusion width.
    pub level_channels: Vec<usize>,
    pub multiscale_kernels: Vec<usize>,
    /// Classes of the domain classifier.
    pub n_domains: usize,
    pub use_adaptor: bool,
    pub use_fusion: bool,
    /// Reconstruction and domain-classification heads.
    pub use_multitask: bool,
    pub eps: f64,
    pub momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            adaptor_channels: 16,
            level_channels: vec![16, 32, 64, 128],
            multiscale_kernels: vec![1, 3, 5],
            n_domains: 4,
            use_adaptor: true,
            use_fusion: true,
            use_multitask: true,
            eps: DEFAULT_EPS,
            momentum: DEFAULT_MOMENTUM,
        }
    }
}

impl ModelConfig {
    /// Narrow network sized for single-core CPU training on 64×64 inputs.
    pub fn desk() -> Self {
        ModelConfig {
            adaptor_channels: 8,
            level_channels: vec![8, 16, 32, 32],
            ..Default::default()
        }
    }

    /// Tiny two-level network for tests and gradient checks.
    pub fn small() -> Self {
        ModelConfig {
            adaptor_channels: 3,
            level_channels: vec![4, 6],
            multiscale_kernels: vec![1, 3],
            n_domains: 3,
            ..Default::default()
        }
    }

    pub fn depth(&self) -> usize {
        self.level_channels.len()
    }

    pub fn fusion_dim(&self) -> usize {
        *self.level_channels.last().unwrap_or(&0)
    }

    /// Required divisor of the input height and width.
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.depth().max(1) - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.level_channels.is_empty() || self.level_channels.contains(&0) {
            return bad(format!("level_channels must be non-empty and positive, got {:?}", self.level_channels));
        }
        if self.depth() > 8 {
            return bad(format!("at most 8 levels supported, got {}", self.depth()));
        }
        if self.use_adaptor && self.adaptor_channels == 0 {
            return bad("adaptor_channels must be positive".into());
        }
        if self.use_fusion
            && (self.multiscale_kernels.is_empty() || self.multiscale_kernels.iter().any(|k| k % 2 == 0))
        {
            return bad(format!("multiscale_kernels must be odd sizes, got {:?}", self.multiscale_kernels));
        }
        if self.use_multitask && self.n_domains < 2 {
            return bad(format!("n_domains must be at least 2, got {}", self.n_domains));
        }
        if !(self.eps > 0.0) || !(0.0..=1.0).contains(&self.momentum) {
            return bad(format!("eps must be positive and momentum in [0, 1], got {} and {}", self.eps, self.momentum));
        }
        Ok(())
    }
}
