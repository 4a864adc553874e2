use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{LossWeights, SsimParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr0: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay_per_epoch: f64,
    pub weights: LossWeights,
    pub ssim: SsimParams,
    pub critic_steps_per_gen: usize,
    pub epochs: usize,
    /// Caps the generator updates per epoch; `None` runs every batch.
    pub max_batches_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr0: 1e-4,
            lr_decay_per_epoch: 0.5,
            weights: LossWeights::default(),
            ssim: SsimParams::default(),
            critic_steps_per_gen: 5,
            epochs: 10,
            max_batches_per_epoch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        for (field, b) in [("train.adam_beta1", self.adam_beta1), ("train.adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, format!("must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("train.adam_eps", "must be positive"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("train.lr0", "must be positive"));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(Error::config("train.lr_decay_per_epoch", "must lie in (0, 1]"));
        }
        if self.critic_steps_per_gen == 0 {
            return Err(Error::config("train.critic_steps_per_gen", "must be at least 1"));
        }
        if self.max_batches_per_epoch == Some(0) {
            return Err(Error::config("train.max_batches_per_epoch", "must be positive"));
        }
        self.weights.validate()?;
        self.ssim.validate()
    }

    /// Whether the adversarial term (and hence a critic) takes part.
    pub fn adversarial(&self) -> bool {
        self.weights.lambda_al > 0.0
    }
}

/// `lr0 · decay^epoch`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr0 * config.lr_decay_per_epoch.powi(epoch as i32)
}
