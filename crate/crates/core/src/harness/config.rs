use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::error::{Error, Result};

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Passes over the training split; 0 only measures the initial model.
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Drives batch order.
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            batch_size: 8,
            patience: 30,
            clip_norm: 1.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lr", self.lr)?;
        positive("clip_norm", self.clip_norm)?;
        positive("eps", self.eps)?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.epochs > 0 && (self.patience == 0 || self.patience > self.epochs) {
            return Err(Error::config(format!(
                "patience must lie in 1..={}, got {}",
                self.epochs, self.patience
            )));
        }
        Ok(())
    }
}

/// Contents of a config file: `{"train": {...}, "arch": {...}}`, both
/// optional. Fusion settings live under `arch.fusion`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub arch: ArchSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.train.validate()?;
        if !(cfg.arch.fusion.p >= 1.0) {
            return Err(Error::config(format!("decay factor p must be >= 1, got {}", cfg.arch.fusion.p)));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Same config with one seed driving initialisation and batch order.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.train.seed = seed;
        c.arch.seed = seed;
        c
    }
}
