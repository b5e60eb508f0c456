//! Latent-action reinforcement learning over motor trajectories.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense matrices, seeded random streams, MLPs with analytic
//!   backward passes, Adam and least squares.
//! - [`trajenv`]: analytic planar environments mapping a trajectory to an end
//!   state, goal sampling, terminal reward and demonstration datasets.
//! - [`genmodels`]: β-VAE and InfoGAN decoders from latent actions to
//!   trajectories.
//! - [`evalmetrics`]: MMD two-sample tests, disentangling precision/recall
//!   (DiPR), disentanglement with precision/recall (DwPR), k-NN
//!   precision/recall, latent local linearity (L3) and Pearson correlation.
//! - [`empolicy`]: expectation-maximization training of a Gaussian latent
//!   policy with a KL-penalized trust-region E-step and a copy M-step.

pub mod empolicy;
pub mod error;
pub mod evalmetrics;
pub mod genmodels;
pub mod numkit;
pub mod trajenv;

pub use error::{Error, Result};
