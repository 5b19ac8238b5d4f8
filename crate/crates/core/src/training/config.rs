use serde::{Deserialize, Serialize};

use super::optimizer::OptimizerKind;
use crate::error::{Error, Result};

/// Discriminator objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Logistic loss; optimum `T = log q - log p`.
    #[default]
    Gan,
    /// KL f-divergence loss; optimum `T = 1 + log q - log p`.
    FganKl,
    /// Logistic loss with an adversary that only sees `z`.
    AaeZOnly,
}

/// Whether the generator step shares samples and parameters with the last adversary step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    #[default]
    Simultaneous,
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvbConfig {
    pub batch_size: usize,
    /// Adversary updates per generator update.
    pub adversary_steps: usize,
    pub objective: Objective,
    pub adaptive_contrast: bool,
    pub optimizer: OptimizerKind,
    pub lr_generator: f64,
    pub lr_adversary: f64,
    /// Step sizes halve every this many steps; `None` keeps them constant.
    pub lr_half_life: Option<u64>,
    pub clip_norm: Option<f64>,
    pub update_order: UpdateOrder,
    /// Lower bound on the moment-matched stddev used for normalization.
    pub sigma_floor: f64,
    pub seed: u64,
}

impl Default for AvbConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            adversary_steps: 1,
            objective: Objective::Gan,
            adaptive_contrast: false,
            optimizer: OptimizerKind::Adam,
            lr_generator: 1e-4,
            lr_adversary: 1e-4,
            lr_half_life: None,
            clip_norm: Some(100.0),
            update_order: UpdateOrder::Simultaneous,
            sigma_floor: 1e-6,
            seed: 0,
        }
    }
}

impl AvbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.adversary_steps == 0 {
            return Err(Error::Config("adversary_steps must be at least 1".into()));
        }
        for (name, v) in [("lr_generator", self.lr_generator), ("lr_adversary", self.lr_adversary)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        if self.lr_half_life == Some(0) {
            return Err(Error::Config("lr_half_life must be positive".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Config("sigma_floor must be positive".into()));
        }
        Ok(())
    }

    fn decay(&self, step: u64) -> f64 {
        match self.lr_half_life {
            Some(h) => 0.5f64.powf(step as f64 / h as f64),
            None => 1.0,
        }
    }

    pub fn generator_step_size(&self, step: u64) -> f64 {
        self.lr_generator * self.decay(step)
    }

    pub fn adversary_step_size(&self, step: u64) -> f64 {
        self.lr_adversary * self.decay(step)
    }
}
