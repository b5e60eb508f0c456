use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numkit::{Activation, LayerSpec, Mlp, StreamRng};

/// Layer widths for decoders, encoders and discriminators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Generator / decoder hidden widths, each `Linear + BatchNorm + ReLU`.
    pub decoder_hidden: Vec<usize>,
    pub batch_norm: bool,
    /// VAE encoder hidden widths (`Linear + ReLU`).
    pub encoder_hidden: Vec<usize>,
    /// Discriminator trunk shared with the Q network (`Linear + ReLU`).
    pub disc_trunk: Vec<usize>,
    /// Hidden width of the Q head.
    pub q_hidden: usize,
}

impl Default for Architecture {
    /// Desk-scale widths: the reference tables divided by four.
    fn default() -> Self {
        Self {
            decoder_hidden: vec![32, 64, 128],
            batch_norm: true,
            encoder_hidden: vec![128, 64, 32],
            disc_trunk: vec![64, 32],
            q_hidden: 16,
        }
    }
}

impl Architecture {
    /// Full-size widths.
    pub fn full() -> Self {
        Self {
            decoder_hidden: vec![128, 256, 512],
            batch_norm: true,
            encoder_hidden: vec![512, 256, 128],
            disc_trunk: vec![256, 128],
            q_hidden: 64,
        }
    }

    pub fn decoder(&self, latent_dim: usize, out_dim: usize, rng: &mut StreamRng) -> Result<Mlp> {
        let mut specs: Vec<LayerSpec> = self
            .decoder_hidden
            .iter()
            .map(|&w| LayerSpec {
                out_dim: w,
                activation: Activation::ReLU,
                batch_norm: self.batch_norm,
            })
            .collect();
        specs.push(LayerSpec::new(out_dim, Activation::Identity));
        Mlp::new(latent_dim, &specs, rng)
    }

    /// Encoder emitting `[μ, logσ]` (width `2 · latent_dim`).
    pub fn encoder(&self, in_dim: usize, latent_dim: usize, rng: &mut StreamRng) -> Result<Mlp> {
        let mut specs: Vec<LayerSpec> = self
            .encoder_hidden
            .iter()
            .map(|&w| LayerSpec::new(w, Activation::ReLU))
            .collect();
        specs.push(LayerSpec::new(2 * latent_dim, Activation::Identity));
        Mlp::new(in_dim, &specs, rng)
    }

    pub fn trunk(&self, in_dim: usize, rng: &mut StreamRng) -> Result<Mlp> {
        let specs: Vec<LayerSpec> = self
            .disc_trunk
            .iter()
            .map(|&w| LayerSpec::new(w, Activation::ReLU))
            .collect();
        Mlp::new(in_dim, &specs, rng)
    }

    pub fn trunk_width(&self, in_dim: usize) -> usize {
        self.disc_trunk.last().copied().unwrap_or(in_dim)
    }
}
