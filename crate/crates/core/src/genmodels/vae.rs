//! β-VAE over flattened trajectories.
//!
//! The decoder likelihood is a unit-variance Gaussian, so the reconstruction
//! term is a mean squared error (averaged over batch and trajectory entries).
//! The KL term is the closed-form divergence of the diagonal-Gaussian
//! posterior from N(0, I), summed over latent dimensions and averaged over
//! the batch. `total = recon + β · kl`.

use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::decoder::{Decoder, GenerativeModel, TrajShape};
use super::prior::Prior;
use super::{check_finite, TrainAbort, TrainConfig};
use crate::error::{ensure, Error, Result};
use crate::numkit::{AdamState, BnMode, ForwardCache, Matrix, Mlp, RngStream};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VaeModel {
    /// Emits `[μ, logσ]`.
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub prior: Prior,
    pub traj_shape: TrajShape,
    pub beta: f64,
    pub kl_target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Gradients of `total` with respect to encoder and decoder parameters.
pub struct VaeGrads {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub beta: f64,
}

impl VaeModel {
    pub fn new(
        traj_shape: TrajShape,
        latent_dim: usize,
        arch: &Architecture,
        kl_target: f64,
        rng: &RngStream,
    ) -> Result<Self> {
        ensure!(latent_dim > 0, "latent dimension must be positive");
        let mut r = rng.named("vae-init").rng();
        let encoder = arch.encoder(traj_shape.len(), latent_dim, &mut r)?;
        let decoder = arch.decoder(latent_dim, traj_shape.len(), &mut r)?;
        Ok(Self {
            encoder,
            decoder,
            prior: Prior::std_normal(latent_dim),
            traj_shape,
            beta: 0.0,
            kl_target,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.dim
    }

    pub fn generative(&self) -> GenerativeModel {
        GenerativeModel {
            decoder: Decoder::Network {
                network: self.decoder.clone(),
            },
            prior: self.prior,
            traj_shape: self.traj_shape,
        }
    }

    /// Posterior means and log standard deviations for each row of `batch`.
    pub fn encode(&self, batch: &Matrix) -> Result<(Matrix, Matrix)> {
        let out = self.encoder.forward(batch)?;
        Ok(out.split_cols(self.latent_dim()))
    }

    fn param_vec(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn set_param_vec(&mut self, p: &[f64]) -> Result<()> {
        let n = self.encoder.param_count();
        self.encoder.set_params(&p[..n])?;
        self.decoder.set_params(&p[n..])
    }
}

/// Closed-form `KL(N(μ, σ²) ‖ N(0, 1))` summed over coordinates.
pub fn gaussian_kl_to_std(mu: &[f64], log_sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(log_sigma)
        .map(|(m, ls)| 0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls))
        .sum()
}

/// Loss with reparameterization noise drawn from `rng`.
pub fn vae_loss(model: &VaeModel, batch: &Matrix, rng: &RngStream) -> Result<VaeLoss> {
    let noise = Matrix::from_fn(batch.rows(), model.latent_dim(), {
        let mut r = rng.rng();
        move |_, _| r.normal()
    });
    vae_loss_with_noise(model, batch, &noise)
}

/// Loss for fixed reparameterization noise `ε` (`α = μ + σ ⊙ ε`).
pub fn vae_loss_with_noise(model: &VaeModel, batch: &Matrix, noise: &Matrix) -> Result<VaeLoss> {
    Ok(forward_backward(model, batch, noise, false)?.0)
}

/// Loss and exact parameter gradients for fixed noise.
pub fn vae_gradients(model: &VaeModel, batch: &Matrix, noise: &Matrix) -> Result<(VaeLoss, VaeGrads)> {
    let (loss, grads, _) = forward_backward(model, batch, noise, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

fn forward_backward(
    model: &VaeModel,
    batch: &Matrix,
    noise: &Matrix,
    want_grads: bool,
) -> Result<(VaeLoss, Option<VaeGrads>, ForwardCache)> {
    let k = model.latent_dim();
    let b = batch.rows();
    ensure!(b > 0, "empty batch");
    ensure!(
        batch.cols() == model.traj_shape.len(),
        "batch width {} != trajectory length {}",
        batch.cols(),
        model.traj_shape.len()
    );
    ensure!(
        noise.shape() == (b, k),
        "noise shape {:?} != ({}, {})",
        noise.shape(),
        b,
        k
    );
    let enc_cache = model.encoder.forward_cached(batch, BnMode::Batch)?;
    let (mu, log_sigma) = enc_cache.output().split_cols(k);
    let latents = Matrix::from_fn(b, k, |i, j| {
        mu.get(i, j) + log_sigma.get(i, j).exp() * noise.get(i, j)
    });
    let dec_cache = model.decoder.forward_cached(&latents, BnMode::Batch)?;
    let recon_out = dec_cache.output();

    let d = batch.cols();
    let denom = (b * d) as f64;
    let mut recon = 0.0;
    for (x, y) in recon_out.as_slice().iter().zip(batch.as_slice()) {
        recon += (x - y) * (x - y);
    }
    recon /= denom;
    let kl = (0..b)
        .map(|i| gaussian_kl_to_std(mu.row(i), log_sigma.row(i)))
        .sum::<f64>()
        / b as f64;
    let loss = VaeLoss {
        total: recon + model.beta * kl,
        recon,
        kl,
    };
    if !want_grads {
        return Ok((loss, None, dec_cache));
    }

    let mut d_out = Matrix::zeros(b, d);
    for ((g, x), y) in d_out
        .as_mut_slice()
        .iter_mut()
        .zip(recon_out.as_slice())
        .zip(batch.as_slice())
    {
        *g = 2.0 * (x - y) / denom;
    }
    let dec_grads = model.decoder.backward(&dec_cache, &d_out)?;
    let d_lat = dec_grads.input;
    let bf = b as f64;
    let mut d_enc = Matrix::zeros(b, 2 * k);
    for i in 0..b {
        for j in 0..k {
            let m = mu.get(i, j);
            let ls = log_sigma.get(i, j);
            let sigma = ls.exp();
            let g = d_lat.get(i, j);
            // reparameterization plus β-weighted KL terms
            d_enc.set(i, j, g + model.beta * m / bf);
            d_enc.set(
                i,
                k + j,
                g * sigma * noise.get(i, j) + model.beta * (sigma * sigma - 1.0) / bf,
            );
        }
    }
    let enc_grads = model.encoder.backward(&enc_cache, &d_enc)?;
    Ok((
        loss,
        Some(VaeGrads {
            encoder: enc_grads.params,
            decoder: dec_grads.params,
        }),
        dec_cache,
    ))
}

/// One step of the KL-target β schedule.
pub fn beta_schedule_step(current_beta: f64, observed_kl: f64, kl_target: f64, increment: f64) -> f64 {
    if observed_kl > kl_target {
        current_beta + increment
    } else {
        current_beta
    }
}

/// Per-epoch β increment: `kl_target · 1e-4`.
pub fn default_beta_increment(kl_target: f64) -> f64 {
    kl_target * 1e-4
}

/// Trains a β-VAE on the rows of `data`.
///
/// β starts at 0 and grows by `kl_target · 1e-4` after every epoch whose mean
/// KL exceeds `kl_target`. Once β has grown, the first epoch at or below the
/// target freezes it.
pub fn train_vae(
    data: &Matrix,
    traj_shape: TrajShape,
    latent_dim: usize,
    config: &TrainConfig,
    arch: &Architecture,
    kl_target: f64,
) -> Result<(VaeModel, Vec<VaeEpoch>), TrainAbort<VaeModel>> {
    config.validate().map_err(TrainAbort::early)?;
    if data.rows() == 0 {
        return Err(TrainAbort::early(Error::Config("empty dataset".into())));
    }
    if !(kl_target > 0.0) {
        return Err(TrainAbort::early(Error::Config("kl_target must be positive".into())));
    }
    let root = RngStream::new(config.seed);
    let mut model = VaeModel::new(traj_shape, latent_dim, arch, kl_target, &root).map_err(TrainAbort::early)?;
    if data.cols() != traj_shape.len() {
        return Err(TrainAbort::early(Error::Contract(format!(
            "dataset width {} != trajectory length {}",
            data.cols(),
            traj_shape.len()
        ))));
    }
    let mut params = model.param_vec();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let increment = default_beta_increment(kl_target);
    let mut frozen = false;
    let mut log = Vec::with_capacity(config.epochs);
    let mut checkpoint = model.clone();

    for epoch in 0..config.epochs {
        let order = root.descend(&[1, epoch as u64]).rng().permutation(data.rows());
        let (mut recon_sum, mut kl_sum, mut batches) = (0.0, 0.0, 0usize);
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = data.select_rows(idx);
            let mut nr = root.descend(&[2, epoch as u64, bi as u64]).rng();
            let noise = Matrix::from_fn(idx.len(), latent_dim, |_, _| nr.normal());
            let (loss, grads, cache) = forward_backward(&model, &batch, &noise, true)
                .map_err(|e| TrainAbort::at(e, checkpoint.clone()))?;
            let grads = grads.expect("gradients requested");
            assert!(loss.kl >= -1e-12, "negative KL {}", loss.kl);
            let mut flat = grads.encoder;
            flat.extend(grads.decoder);
            if !loss.total.is_finite() || !flat.iter().all(|g| g.is_finite()) {
                return Err(TrainAbort::at(
                    Error::NumericFailure {
                        epoch,
                        batch: bi,
                        context: "non-finite VAE loss or gradient".into(),
                    },
                    checkpoint,
                ));
            }
            adam.update(&mut params, &flat)
                .map_err(|e| TrainAbort::at(e, checkpoint.clone()))?;
            model
                .set_param_vec(&params)
                .map_err(|e| TrainAbort::at(e, checkpoint.clone()))?;
            model.decoder.update_running_stats(&cache);
            recon_sum += loss.recon;
            kl_sum += loss.kl;
            batches += 1;
        }
        check_finite(&model.decoder, epoch).map_err(|e| TrainAbort::at(e, checkpoint.clone()))?;
        let recon = recon_sum / batches as f64;
        let kl = kl_sum / batches as f64;
        log.push(VaeEpoch {
            epoch,
            recon,
            kl,
            beta: model.beta,
        });
        if !frozen {
            if kl <= kl_target && model.beta > 0.0 {
                frozen = true;
            } else {
                model.beta = beta_schedule_step(model.beta, kl, kl_target, increment);
            }
        }
        checkpoint = model.clone();
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Activation, Layer};

    fn zero_encoder(in_dim: usize, k: usize) -> Mlp {
        Mlp::from_layers(vec![Layer {
            weight: Matrix::zeros(2 * k, in_dim),
            bias: vec![0.0; 2 * k],
            activation: Activation::Identity,
            batch_norm: None,
        }])
        .unwrap()
    }

    #[test]
    fn kl_closed_form_examples() {
        assert_eq!(gaussian_kl_to_std(&[0.0], &[0.0]), 0.0);
        assert!((gaussian_kl_to_std(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn standard_posterior_has_zero_kl() {
        let shape = TrajShape::new(3, 2);
        let mut m = VaeModel::new(shape, 2, &Architecture::default(), 1.0, &RngStream::new(0)).unwrap();
        m.encoder = zero_encoder(6, 2);
        m.beta = 0.3;
        let batch = Matrix::from_fn(4, 6, |i, j| (i + j) as f64 * 0.1);
        let l = vae_loss(&m, &batch, &RngStream::new(1)).unwrap();
        assert_eq!(l.kl, 0.0);
        assert!((l.total - l.recon).abs() < 1e-15);
    }

    #[test]
    fn beta_schedule_examples() {
        assert_eq!(beta_schedule_step(0.0, 10.0, 2.5, 1e-4), 1e-4);
        assert_eq!(beta_schedule_step(0.01, 2.0, 2.5, 1e-4), 0.01);
    }

    #[test]
    fn batch_shape_checked() {
        let m = VaeModel::new(TrajShape::new(3, 2), 2, &Architecture::default(), 1.0, &RngStream::new(0)).unwrap();
        assert!(vae_loss(&m, &Matrix::zeros(4, 5), &RngStream::new(0)).is_err());
    }
}
