use serde::{Deserialize, Serialize};

use crate::augment::AugmentSet;
use crate::error::{Error, Result};
use crate::kde::KdeConfig;

/// Network used to compute matched gradients in gradient matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateKind {
    #[default]
    Mlp,
    /// Conv surrogate; has no second-order path and is rejected at start-up.
    Convnet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsaConfig {
    pub surrogate: SurrogateKind,
    /// Pixel learning rate of gradient matching.
    pub lr_pixels: f64,
    pub hidden: usize,
    /// Surrogate epochs on the synthetic set after every outer iteration.
    pub inner_epochs: usize,
    pub inner_lr: f64,
    pub inner_batch: usize,
    /// Outer iterations between surrogate re-initializations.
    pub reinit_every: usize,
}

impl Default for DsaConfig {
    fn default() -> Self {
        DsaConfig {
            surrogate: SurrogateKind::Mlp,
            lr_pixels: 10.0,
            hidden: 128,
            inner_epochs: 1,
            inner_lr: 0.01,
            inner_batch: 256,
            reinit_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub ipc: usize,
    pub iterations: usize,
    /// Pixel learning rate of distribution matching.
    pub lr_pixels: f64,
    pub momentum: f64,
    /// Real samples drawn per class and iteration.
    pub batch_real: usize,
    /// Inverse-density reweighting of real batches; absent means vanilla.
    pub kde: Option<KdeConfig>,
    pub augment: AugmentSet,
    /// Filters per conv block of the random feature nets.
    pub width: usize,
    pub depth: usize,
    pub dsa: DsaConfig,
    /// Set from the run-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            ipc: 10,
            iterations: 1000,
            lr_pixels: 1.0,
            momentum: 0.5,
            batch_real: 64,
            kde: None,
            augment: AugmentSet::default(),
            width: 16,
            depth: 2,
            dsa: DsaConfig::default(),
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ipc == 0 {
            return Err(Error::Config("ipc must be at least 1".into()));
        }
        if !(self.lr_pixels > 0.0 && self.lr_pixels.is_finite()) {
            return Err(Error::Config(format!("lr_pixels must be positive, got {}", self.lr_pixels)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_real == 0 || self.width == 0 || self.depth == 0 {
            return Err(Error::Config("batch_real, width and depth must be positive".into()));
        }
        if !(self.dsa.lr_pixels > 0.0 && self.dsa.lr_pixels.is_finite()) {
            return Err(Error::Config(format!("dsa lr_pixels must be positive, got {}", self.dsa.lr_pixels)));
        }
        if self.dsa.reinit_every == 0 || self.dsa.hidden == 0 || self.dsa.inner_batch == 0 {
            return Err(Error::Config("dsa reinit_every, hidden and inner_batch must be positive".into()));
        }
        if let Some(k) = &self.kde {
            k.validate()?;
        }
        Ok(())
    }
}
