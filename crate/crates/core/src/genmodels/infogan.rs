//! InfoGAN with a discriminator trunk shared by the real/fake head and the
//! Q network.
//!
//! ```text
//! τ ─ trunk ─┬─ d_head ─ logit ─ sigmoid ─ D(τ)
//!            └─ q_head ─ [μ_Q, logσ_Q]
//! ```
//!
//! Per batch the discriminator side (trunk, d_head, q_head) takes one Adam
//! step on `d_loss + λ·info_loss`, then the generator takes one step on
//! `g_loss + λ·info_loss` evaluated with the updated discriminator.

use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::decoder::{Decoder, GenerativeModel, TrajShape};
use super::prior::Prior;
use super::{check_finite, TrainAbort, TrainConfig};
use crate::error::{ensure, Error, Result};
use crate::numkit::{sigmoid, AdamState, BnMode, ForwardCache, Matrix, Mlp, RngStream};

pub const D_CLAMP: f64 = 1e-7;
pub const Q_LOG_SIGMA_MIN: f64 = -5.0;
pub const Q_LOG_SIGMA_MAX: f64 = 2.0;
pub const GAN_BETA1: f64 = 0.5;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfoGanModel {
    pub generator: Mlp,
    pub trunk: Mlp,
    /// Trunk features to one logit.
    pub d_head: Mlp,
    /// Trunk features to `[μ_Q, raw logσ_Q]`.
    pub q_head: Mlp,
    pub prior: Prior,
    pub traj_shape: TrajShape,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfoGanLosses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub info_loss: f64,
    /// Discriminator outputs clamped into `[1e-7, 1 - 1e-7]`.
    pub clamp_events: usize,
}

impl InfoGanLosses {
    /// Sum reported under the name "M loss" (an interpretation).
    pub fn m_loss(&self, lambda: f64) -> f64 {
        self.d_loss + self.g_loss + lambda * self.info_loss
    }
}

/// Gradient of one scalar loss, split by parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupGrads {
    pub generator: Vec<f64>,
    pub trunk: Vec<f64>,
    pub d_head: Vec<f64>,
    pub q_head: Vec<f64>,
}

impl GroupGrads {
    fn zeros(m: &InfoGanModel) -> Self {
        Self {
            generator: vec![0.0; m.generator.param_count()],
            trunk: vec![0.0; m.trunk.param_count()],
            d_head: vec![0.0; m.d_head.param_count()],
            q_head: vec![0.0; m.q_head.param_count()],
        }
    }

    /// Discriminator-side parameters in `trunk, d_head, q_head` order.
    pub fn disc_flat(&self) -> Vec<f64> {
        let mut v = self.trunk.clone();
        v.extend(&self.d_head);
        v.extend(&self.q_head);
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfoGanGrads {
    pub d_loss: GroupGrads,
    pub g_loss: GroupGrads,
    pub info_loss: GroupGrads,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanEpoch {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub info_loss: f64,
    #[serde(skip)]
    pub clamp_events: usize,
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

impl InfoGanModel {
    pub fn new(
        traj_shape: TrajShape,
        latent_dim: usize,
        arch: &Architecture,
        lambda: f64,
        rng: &RngStream,
    ) -> Result<Self> {
        use crate::numkit::{Activation, LayerSpec};
        ensure!(latent_dim > 0, "latent dimension must be positive");
        let mut r = rng.named("infogan-init").rng();
        let generator = arch.decoder(latent_dim, traj_shape.len(), &mut r)?;
        let trunk = arch.trunk(traj_shape.len(), &mut r)?;
        let width = arch.trunk_width(traj_shape.len());
        let d_head = Mlp::new(width, &[LayerSpec::new(1, Activation::Identity)], &mut r)?;
        let q_head = Mlp::new(
            width,
            &[
                LayerSpec::new(arch.q_hidden, Activation::ReLU),
                LayerSpec::new(2 * latent_dim, Activation::Identity),
            ],
            &mut r,
        )?;
        Ok(Self {
            generator,
            trunk,
            d_head,
            q_head,
            prior: Prior::uniform(latent_dim),
            traj_shape,
            lambda,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.dim
    }

    pub fn generative(&self) -> GenerativeModel {
        GenerativeModel {
            decoder: Decoder::Network {
                network: self.generator.clone(),
            },
            prior: self.prior,
            traj_shape: self.traj_shape,
        }
    }

    /// Discriminator logits for trajectories.
    pub fn disc_logits(&self, trajs: &Matrix) -> Result<Matrix> {
        self.d_head.forward(&self.trunk.forward(trajs)?)
    }

    /// `[μ_Q, logσ_Q]` for trajectories, with logσ_Q clamped.
    pub fn q_outputs(&self, trajs: &Matrix) -> Result<Matrix> {
        let k = self.latent_dim();
        let raw = self.q_head.forward(&self.trunk.forward(trajs)?)?;
        Ok(Matrix::from_fn(raw.rows(), 2 * k, |i, j| {
            let v = raw.get(i, j);
            if j < k {
                v
            } else {
                v.clamp(Q_LOG_SIGMA_MIN, Q_LOG_SIGMA_MAX)
            }
        }))
    }

    fn disc_params(&self) -> Vec<f64> {
        let mut p = self.trunk.params();
        p.extend(self.d_head.params());
        p.extend(self.q_head.params());
        p
    }

    fn set_disc_params(&mut self, p: &[f64]) -> Result<()> {
        let a = self.trunk.param_count();
        let b = a + self.d_head.param_count();
        self.trunk.set_params(&p[..a])?;
        self.d_head.set_params(&p[a..b])?;
        self.q_head.set_params(&p[b..])
    }
}

/// Diagonal-Gaussian negative log-likelihood of `alpha` under `(mu, exp(log_sigma))`.
pub fn gaussian_nll(alpha: &[f64], mu: &[f64], log_sigma: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(mu)
        .zip(log_sigma)
        .map(|((a, m), ls)| HALF_LN_2PI + ls + (a - m).powi(2) / (2.0 * (2.0 * ls).exp()))
        .sum()
}

/// Losses on `real_batch` with one prior latent per real row drawn from `rng`.
pub fn infogan_losses(model: &InfoGanModel, real_batch: &Matrix, rng: &RngStream) -> Result<InfoGanLosses> {
    let latents = model.prior.sample(real_batch.rows(), &mut rng.rng());
    Ok(pass(model, real_batch, &latents, false)?.0)
}

/// Losses and exact gradients of each loss with respect to every parameter
/// group, for fixed latents. The generator runs in batch-statistics mode.
pub fn infogan_gradients(
    model: &InfoGanModel,
    real_batch: &Matrix,
    latents: &Matrix,
) -> Result<(InfoGanLosses, InfoGanGrads)> {
    let (l, g, _) = pass(model, real_batch, latents, true)?;
    Ok((l, g.expect("gradients requested")))
}

/// Sigmoid clamped into `[1e-7, 1 - 1e-7]`; the flag marks an active clamp.
fn clamp_prob(logit: f64) -> (f64, bool) {
    let p = sigmoid(logit);
    if p < D_CLAMP {
        (D_CLAMP, true)
    } else if p > 1.0 - D_CLAMP {
        (1.0 - D_CLAMP, true)
    } else {
        (p, false)
    }
}

fn pass(
    model: &InfoGanModel,
    real: &Matrix,
    latents: &Matrix,
    want_grads: bool,
) -> Result<(InfoGanLosses, Option<InfoGanGrads>, ForwardCache)> {
    let k = model.latent_dim();
    ensure!(real.rows() > 0, "empty real batch");
    ensure!(
        real.cols() == model.traj_shape.len(),
        "real batch width {} != trajectory length {}",
        real.cols(),
        model.traj_shape.len()
    );
    ensure!(latents.cols() == k && latents.rows() > 0, "latent batch shape {:?}", latents.shape());
    let br = real.rows() as f64;
    let bf = latents.rows() as f64;

    let gen_c = model.generator.forward_cached(latents, BnMode::Batch)?;
    let fake = gen_c.output();
    let tr_c = model.trunk.forward_cached(real, BnMode::Batch)?;
    let dr_c = model.d_head.forward_cached(tr_c.output(), BnMode::Batch)?;
    let tf_c = model.trunk.forward_cached(fake, BnMode::Batch)?;
    let df_c = model.d_head.forward_cached(tf_c.output(), BnMode::Batch)?;
    let qf_c = model.q_head.forward_cached(tf_c.output(), BnMode::Batch)?;

    let mut clamp_events = 0;
    let mut d_loss = 0.0;
    let mut g_loss = 0.0;
    // d/dlogit of each loss (zero where the clamp is active)
    let mut dd_real = Matrix::zeros(real.rows(), 1);
    let mut dd_fake = Matrix::zeros(latents.rows(), 1);
    let mut dg_fake = Matrix::zeros(latents.rows(), 1);
    for i in 0..real.rows() {
        let (p, clamped) = clamp_prob(dr_c.output().get(i, 0));
        clamp_events += clamped as usize;
        d_loss -= p.ln() / br;
        if !clamped {
            dd_real.set(i, 0, -(1.0 - p) / br);
        }
    }
    for i in 0..latents.rows() {
        let (p, clamped) = clamp_prob(df_c.output().get(i, 0));
        clamp_events += clamped as usize;
        d_loss -= (1.0 - p).ln() / bf;
        g_loss -= p.ln() / bf;
        if !clamped {
            dd_fake.set(i, 0, p / bf);
            dg_fake.set(i, 0, -(1.0 - p) / bf);
        }
    }

    let q = qf_c.output();
    let mut info = 0.0;
    let mut dq = Matrix::zeros(latents.rows(), 2 * k);
    for i in 0..latents.rows() {
        for j in 0..k {
            let mu = q.get(i, j);
            let raw = q.get(i, k + j);
            let ls = raw.clamp(Q_LOG_SIGMA_MIN, Q_LOG_SIGMA_MAX);
            let var = (2.0 * ls).exp();
            let diff = latents.get(i, j) - mu;
            info += (HALF_LN_2PI + ls + diff * diff / (2.0 * var)) / bf;
            dq.set(i, j, -diff / var / bf);
            if (Q_LOG_SIGMA_MIN..=Q_LOG_SIGMA_MAX).contains(&raw) {
                dq.set(i, k + j, (1.0 - diff * diff / var) / bf);
            }
        }
    }
    let losses = InfoGanLosses {
        d_loss,
        g_loss,
        info_loss: info,
        clamp_events,
    };
    if !want_grads {
        return Ok((losses, None, gen_c));
    }

    // d_loss: real and fake paths through d_head and trunk, then generator.
    let mut gd = GroupGrads::zeros(model);
    let hr = model.d_head.backward(&dr_c, &dd_real)?;
    let tr = model.trunk.backward(&tr_c, &hr.input)?;
    add_into(&mut gd.d_head, &hr.params);
    add_into(&mut gd.trunk, &tr.params);
    let hf = model.d_head.backward(&df_c, &dd_fake)?;
    let tf = model.trunk.backward(&tf_c, &hf.input)?;
    add_into(&mut gd.d_head, &hf.params);
    add_into(&mut gd.trunk, &tf.params);
    gd.generator = model.generator.backward(&gen_c, &tf.input)?.params;

    let mut gg = GroupGrads::zeros(model);
    let hf = model.d_head.backward(&df_c, &dg_fake)?;
    let tf = model.trunk.backward(&tf_c, &hf.input)?;
    gg.d_head = hf.params;
    gg.trunk = tf.params;
    gg.generator = model.generator.backward(&gen_c, &tf.input)?.params;

    let mut gi = GroupGrads::zeros(model);
    let qb = model.q_head.backward(&qf_c, &dq)?;
    let tf = model.trunk.backward(&tf_c, &qb.input)?;
    gi.q_head = qb.params;
    gi.trunk = tf.params;
    gi.generator = model.generator.backward(&gen_c, &tf.input)?.params;

    Ok((
        losses,
        Some(InfoGanGrads {
            d_loss: gd,
            g_loss: gg,
            info_loss: gi,
        }),
        gen_c,
    ))
}

fn numeric(epoch: usize, batch: usize, what: &str) -> Error {
    Error::NumericFailure {
        epoch,
        batch,
        context: what.into(),
    }
}

/// Trains an InfoGAN with a uniform latent prior on `data`.
///
/// With `lambda == 0` the information term is left out of both updates.
pub fn train_infogan(
    data: &Matrix,
    traj_shape: TrajShape,
    latent_dim: usize,
    config: &TrainConfig,
    arch: &Architecture,
    lambda: f64,
) -> Result<(InfoGanModel, Vec<GanEpoch>), TrainAbort<InfoGanModel>> {
    config.validate().map_err(TrainAbort::early)?;
    if data.rows() == 0 {
        return Err(TrainAbort::early(Error::Config("empty dataset".into())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(TrainAbort::early(Error::Config("lambda must be non-negative".into())));
    }
    if data.cols() != traj_shape.len() {
        return Err(TrainAbort::early(Error::Contract(format!(
            "dataset width {} != trajectory length {}",
            data.cols(),
            traj_shape.len()
        ))));
    }
    let root = RngStream::new(config.seed);
    let mut model = InfoGanModel::new(traj_shape, latent_dim, arch, lambda, &root).map_err(TrainAbort::early)?;
    let mut disc = model.disc_params();
    let mut gen = model.generator.params();
    let mut disc_adam = AdamState::with_betas(disc.len(), config.learning_rate, GAN_BETA1, 0.999);
    let mut gen_adam = AdamState::with_betas(gen.len(), config.learning_rate, GAN_BETA1, 0.999);
    let use_info = lambda > 0.0;
    let mut checkpoint = model.clone();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let order = root.descend(&[1, epoch as u64]).rng().permutation(data.rows());
        let mut sums = [0.0; 3];
        let mut clamps = 0;
        let mut batches = 0usize;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let fail = |e: Error, c: &InfoGanModel| TrainAbort::at(e, c.clone());
            let real = data.select_rows(idx);
            let z = model
                .prior
                .sample(idx.len(), &mut root.descend(&[2, epoch as u64, bi as u64]).rng());

            let (losses, grads, _) = pass(&model, &real, &z, true).map_err(|e| fail(e, &checkpoint))?;
            let grads = grads.expect("gradients requested");
            let mut step = grads.d_loss.disc_flat();
            if use_info {
                for (s, g) in step.iter_mut().zip(grads.info_loss.disc_flat()) {
                    *s += lambda * g;
                }
            }
            if !step.iter().all(|g| g.is_finite()) || !losses.d_loss.is_finite() {
                return Err(fail(numeric(epoch, bi, "non-finite discriminator gradient"), &checkpoint));
            }
            disc_adam.update(&mut disc, &step).map_err(|e| fail(e, &checkpoint))?;
            model.set_disc_params(&disc).map_err(|e| fail(e, &checkpoint))?;

            let (_, grads, gen_cache) = pass(&model, &real, &z, true).map_err(|e| fail(e, &checkpoint))?;
            let grads = grads.expect("gradients requested");
            let mut step = grads.g_loss.generator;
            if use_info {
                add_scaled(&mut step, &grads.info_loss.generator, lambda);
            }
            if !step.iter().all(|g| g.is_finite()) {
                return Err(fail(numeric(epoch, bi, "non-finite generator gradient"), &checkpoint));
            }
            gen_adam.update(&mut gen, &step).map_err(|e| fail(e, &checkpoint))?;
            model.generator.set_params(&gen).map_err(|e| fail(e, &checkpoint))?;
            model.generator.update_running_stats(&gen_cache);

            sums[0] += losses.d_loss;
            sums[1] += losses.g_loss;
            sums[2] += losses.info_loss;
            clamps += losses.clamp_events;
            batches += 1;
        }
        for net in [&model.generator, &model.trunk, &model.d_head, &model.q_head] {
            check_finite(net, epoch).map_err(|e| TrainAbort::at(e, checkpoint.clone()))?;
        }
        let n = batches as f64;
        log.push(GanEpoch {
            epoch,
            d_loss: sums[0] / n,
            g_loss: sums[1] / n,
            info_loss: sums[2] / n,
            clamp_events: clamps,
        });
        checkpoint = model.clone();
    }
    Ok((model, log))
}

fn add_scaled(acc: &mut [f64], g: &[f64], s: f64) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += s * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Activation, Layer};

    fn tiny() -> InfoGanModel {
        let arch = Architecture {
            decoder_hidden: vec![4],
            batch_norm: true,
            encoder_hidden: vec![],
            disc_trunk: vec![5],
            q_hidden: 3,
        };
        InfoGanModel::new(TrajShape::new(2, 2), 2, &arch, 1.0, &RngStream::new(3)).unwrap()
    }

    #[test]
    fn half_discriminator_gives_two_ln_two() {
        let mut m = tiny();
        let w = m.d_head.layers()[0].in_dim();
        m.d_head = Mlp::from_layers(vec![Layer {
            weight: Matrix::zeros(1, w),
            bias: vec![0.0],
            activation: Activation::Identity,
            batch_norm: None,
        }])
        .unwrap();
        let real = Matrix::from_fn(6, 4, |i, j| (i as f64 - j as f64) * 0.1);
        let l = infogan_losses(&m, &real, &RngStream::new(0)).unwrap();
        assert!((l.d_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(l.clamp_events, 0);
    }

    #[test]
    fn nll_at_mean() {
        let a = [0.3, -0.7, 0.1];
        let v = gaussian_nll(&a, &a, &[0.0; 3]);
        assert!((v - 1.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn shared_trunk_moves_both_heads() {
        let mut m = tiny();
        let t = Matrix::from_fn(3, 4, |i, j| 0.3 * i as f64 + 0.1 * j as f64);
        let (l0, q0) = (m.disc_logits(&t).unwrap(), m.q_outputs(&t).unwrap());
        let mut p = m.trunk.params();
        for x in p.iter_mut() {
            *x += 0.5;
        }
        m.trunk.set_params(&p).unwrap();
        assert_ne!(l0, m.disc_logits(&t).unwrap());
        assert_ne!(q0, m.q_outputs(&t).unwrap());
    }

    #[test]
    fn d_head_untouched_by_info() {
        let m = tiny();
        let real = Matrix::from_fn(4, 4, |i, j| (i * j) as f64 * 0.05);
        let z = m.prior.sample(4, &mut RngStream::new(1).rng());
        let (_, g) = infogan_gradients(&m, &real, &z).unwrap();
        assert!(g.info_loss.d_head.iter().all(|&x| x == 0.0));
        assert!(g.g_loss.q_head.iter().all(|&x| x == 0.0));
    }
}
