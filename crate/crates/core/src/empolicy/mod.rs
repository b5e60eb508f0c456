//! EM training of a Gaussian latent-action policy.
//!
//! Each outer iteration samples goals, draws latents from `π`, decodes and
//! executes them, fits the value baseline, improves a variational copy `q`
//! under a KL-penalized importance-weighted objective (E-step), then copies
//! `q` back into `π` (M-step). The task is a contextual bandit: the reward is
//! a function of the goal and the whole trajectory only.

pub mod estep;
pub mod policy;
pub mod train;
pub mod value;

use serde::{Deserialize, Serialize};

pub use estep::{estep_surrogate, estep_update, EstepOutcome, RolloutBatch, Surrogate};
pub use policy::{
    gaussian_kl, gaussian_log_density, gaussian_sample, mstep_copy, policy_sample, states_matrix, LatentPolicy,
    ValueFunction,
};
pub use train::{train_em, CurvePoint, EmOutcome};
pub use value::{value_fit, ValueFit};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub batch_size: usize,
    pub outer_iterations: usize,
    pub inner_epochs: usize,
    pub minibatch: usize,
    pub kl_weight: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub value_steps: usize,
    pub normalize_advantages: bool,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            outer_iterations: 200,
            inner_epochs: 5,
            minibatch: 64,
            kl_weight: 1.0,
            policy_lr: 3e-3,
            value_lr: 1e-2,
            value_steps: 200,
            normalize_advantages: true,
            policy_hidden: vec![32, 32],
            value_hidden: vec![32],
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.outer_iterations == 0 || self.inner_epochs == 0 || self.minibatch == 0 {
            return Err(Error::Config("EM counts must be positive".into()));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::Config("kl_weight must be non-negative".into()));
        }
        if !(self.policy_lr > 0.0 && self.value_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}
