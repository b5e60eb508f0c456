//! Latent-variable trajectory generators: β-VAE and InfoGAN training, plus
//! the analytic decoders used as metric and policy fixtures.

pub mod arch;
pub mod decoder;
pub mod fixtures;
pub mod infogan;
pub mod io;
pub mod prior;
pub mod vae;

use serde::{Deserialize, Serialize};

pub use arch::Architecture;
pub use decoder::{AnalyticDecoder, Decoder, GenerativeModel, TrajShape};
pub use infogan::{infogan_gradients, infogan_losses, train_infogan, GanEpoch, InfoGanLosses, InfoGanModel};
pub use io::{ModelFile, ModelKind};
pub use prior::{Prior, PriorKind};
pub use vae::{beta_schedule_step, train_vae, vae_gradients, vae_loss, vae_loss_with_noise, VaeEpoch, VaeLoss, VaeModel};

use crate::error::{Error, Result};
use crate::numkit::Mlp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Training failure, carrying the last model state that passed the
/// end-of-epoch finiteness check (none if training failed before one).
#[derive(Debug)]
pub struct TrainAbort<M> {
    pub error: Error,
    pub checkpoint: Option<Box<M>>,
}

impl<M> TrainAbort<M> {
    pub fn early(error: Error) -> Self {
        Self {
            error,
            checkpoint: None,
        }
    }

    pub fn at(error: Error, checkpoint: M) -> Self {
        Self {
            error,
            checkpoint: Some(Box::new(checkpoint)),
        }
    }
}

impl<M> std::fmt::Display for TrainAbort<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

pub(crate) fn check_finite(net: &Mlp, epoch: usize) -> Result<()> {
    if net.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericFailure {
            epoch,
            batch: 0,
            context: "non-finite parameters after epoch".into(),
        })
    }
}
