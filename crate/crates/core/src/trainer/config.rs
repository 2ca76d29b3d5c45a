use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, DEFAULT_SMOOTH};
use crate::model::ModelConfig;

/// One optimization stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub freeze_backbone: bool,
    pub lambda_seg: f64,
    pub lambda_rec: f64,
    pub lambda_cls: f64,
}

impl StageConfig {
    /// Backbone frozen, all tasks weighted equally.
    pub fn adapt(epochs: usize, base_lr: f64) -> Self {
        StageConfig {
            epochs,
            base_lr,
            freeze_backbone: true,
            lambda_seg: 1.0,
            lambda_rec: 1.0,
            lambda_cls: 1.0,
        }
    }

    /// Everything trainable, segmentation emphasized.
    pub fn finetune(epochs: usize, base_lr: f64) -> Self {
        StageConfig {
            epochs,
            base_lr,
            freeze_backbone: false,
            lambda_seg: 2.0,
            lambda_rec: 0.5,
            lambda_cls: 0.5,
        }
    }

    pub fn weights(&self, alpha: f64, beta: f64) -> LossWeights {
        LossWeights {
            alpha,
            beta,
            lambda_seg: self.lambda_seg,
            lambda_rec: self.lambda_rec,
            lambda_cls: self.lambda_cls,
        }
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub image_size: usize,
    /// Domain excluded from training and used for evaluation.
    pub unseen_domain: usize,
    pub alpha: f64,
    pub beta: f64,
    pub smooth: f64,
    pub stages: Vec<StageConfig>,
    pub model: ModelConfig,
    /// `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
    /// Mix domains evenly within each batch.
    pub balanced: bool,
    /// Fraction of each training domain held out for validation.
    pub val_fraction: f64,
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            batch_size: 16,
            image_size: 256,
            unseen_domain: 0,
            alpha: 0.4,
            beta: 0.6,
            smooth: DEFAULT_SMOOTH,
            stages: vec![StageConfig::adapt(10, 4e-5), StageConfig::finetune(20, 4e-5)],
            model: ModelConfig::default(),
            augment: Some(AugmentConfig::default()),
            balanced: true,
            val_fraction: 0.1,
            threshold: 0.5,
        }
    }
}

impl RunConfig {
    /// Settings that train the narrow network on 64×64 synthetic domains
    /// within a couple of CPU minutes.
    pub fn desk() -> Self {
        RunConfig {
            batch_size: 8,
            image_size: 64,
            stages: vec![StageConfig::adapt(4, 5e-3), StageConfig::finetune(12, 5e-3)],
            model: ModelConfig::desk(),
            ..Default::default()
        }
    }

    /// A seconds-long run for smoke tests.
    pub fn smoke() -> Self {
        RunConfig {
            batch_size: 4,
            image_size: 32,
            stages: vec![StageConfig::adapt(1, 2e-3), StageConfig::finetune(1, 2e-3)],
            model: ModelConfig {
                adaptor_channels: 4,
                level_channels: vec![4, 8, 8],
                ..ModelConfig::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model.validate()?;
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        let m = self.model.spatial_multiple();
        if self.image_size == 0 || self.image_size % m != 0 {
            return bad(format!("image_size {} must be a positive multiple of {m}", self.image_size));
        }
        if self.model.use_multitask && self.unseen_domain >= self.model.n_domains {
            return bad(format!(
                "unseen_domain {} out of range for {} domains",
                self.unseen_domain, self.model.n_domains
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} must lie in (0, 1)", self.threshold));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} must lie in [0, 1)", self.val_fraction));
        }
        if !(self.smooth > 0.0) {
            return bad(format!("smooth {} must be positive", self.smooth));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.base_lr > 0.0 && s.base_lr.is_finite()) {
                return bad(format!("stage {i}: base_lr must be positive"));
            }
            s.weights(self.alpha, self.beta)
                .validate()
                .map_err(|e| Error::Config(format!("stage {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 (hex) of the key-sorted compact JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Hex SHA-256 digest of a value's canonical JSON (object keys sorted,
/// no whitespace).
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("value serializes");
    let text = serde_json::to_string(&canonical).expect("json value serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
