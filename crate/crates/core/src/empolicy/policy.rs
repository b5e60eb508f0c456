//! Diagonal-Gaussian latent policy `π(α | s)` and its value baseline.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numkit::{Activation, Layer, LayerSpec, Matrix, Mlp, StreamRng};
use crate::trajenv::GoalState;

pub const LOG_SIGMA_MIN: f64 = -4.0;
pub const LOG_SIGMA_MAX: f64 = 1.0;
pub const LOG_SIGMA_INIT: f64 = -0.5;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Goal states as an `n × 2` matrix.
pub fn states_matrix(states: &[GoalState]) -> Matrix {
    Matrix::from_fn(states.len(), 2, |i, j| states[i].target[j])
}

/// `μ + σ ⊙ z`
pub fn gaussian_sample(mu: &[f64], log_sigma: &[f64], z: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(log_sigma)
        .zip(z)
        .map(|((m, ls), e)| m + ls.exp() * e)
        .collect()
}

pub fn gaussian_log_density(alpha: &[f64], mu: &[f64], log_sigma: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(mu)
        .zip(log_sigma)
        .map(|((a, m), ls)| {
            let u = (a - m) / ls.exp();
            -HALF_LN_2PI - ls - 0.5 * u * u
        })
        .sum()
}

/// Closed-form `KL(N(μq, σq²) ‖ N(μp, σp²))` summed over coordinates.
pub fn gaussian_kl(mu_q: &[f64], ls_q: &[f64], mu_p: &[f64], ls_p: &[f64]) -> f64 {
    (0..mu_q.len())
        .map(|j| {
            let vq = (2.0 * ls_q[j]).exp();
            let vp = (2.0 * ls_p[j]).exp();
            let dm = mu_q[j] - mu_p[j];
            ls_p[j] - ls_q[j] + (vq + dm * dm) / (2.0 * vp) - 0.5
        })
        .sum()
}

/// Policy head outputs for a batch of states.
pub struct Heads {
    pub mu: Matrix,
    /// Clamped into `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
    pub log_sigma: Matrix,
    /// Whether each log σ entry sits inside the clamp range (has gradient).
    pub active: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPolicy {
    pub net: Mlp,
    pub latent_dim: usize,
}

impl LatentPolicy {
    /// `2 → hidden (tanh) → [μ, logσ]`; the log σ rows start at zero weight
    /// and bias `LOG_SIGMA_INIT`.
    pub fn new(latent_dim: usize, hidden: &[usize], rng: &mut StreamRng) -> Result<Self> {
        ensure!(latent_dim > 0, "latent dimension must be positive");
        let mut specs: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::new(w, Activation::Tanh)).collect();
        specs.push(LayerSpec::new(2 * latent_dim, Activation::Identity));
        let mut net = Mlp::new(2, &specs, rng)?;
        let last = net.layers_mut().last_mut().expect("non-empty");
        for r in latent_dim..2 * latent_dim {
            for c in 0..last.weight.cols() {
                last.weight.set(r, c, 0.0);
            }
            last.bias[r] = LOG_SIGMA_INIT;
        }
        Ok(Self { net, latent_dim })
    }

    pub fn from_net(net: Mlp, latent_dim: usize) -> Result<Self> {
        ensure!(net.input_dim() == 2, "policy input must be 2-D goal state");
        ensure!(net.output_dim() == 2 * latent_dim, "policy output must be 2·N_α");
        Ok(Self { net, latent_dim })
    }

    pub fn heads(&self, states: &Matrix) -> Result<Heads> {
        Ok(self.heads_from_output(&self.net.forward(states)?))
    }

    pub(crate) fn heads_from_output(&self, out: &Matrix) -> Heads {
        let k = self.latent_dim;
        let (mu, raw) = out.split_cols(k);
        let active = raw
            .as_slice()
            .iter()
            .map(|&v| (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&v))
            .collect();
        Heads {
            mu,
            log_sigma: raw.map(|v| v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)),
            active,
        }
    }

    /// Samples one latent per state; returns latents and their log-densities.
    pub fn sample(&self, states: &Matrix, rng: &mut StreamRng) -> Result<(Matrix, Vec<f64>)> {
        let noise = Matrix::from_fn(states.rows(), self.latent_dim, |_, _| rng.normal());
        self.sample_with_noise(states, &noise)
    }

    pub fn sample_with_noise(&self, states: &Matrix, noise: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        ensure!(noise.shape() == (states.rows(), self.latent_dim), "noise shape mismatch");
        let h = self.heads(states)?;
        let mut latents = Matrix::zeros(states.rows(), self.latent_dim);
        let mut logp = Vec::with_capacity(states.rows());
        for i in 0..states.rows() {
            let a = gaussian_sample(h.mu.row(i), h.log_sigma.row(i), noise.row(i));
            logp.push(gaussian_log_density(&a, h.mu.row(i), h.log_sigma.row(i)));
            latents.row_mut(i).copy_from_slice(&a);
        }
        Ok((latents, logp))
    }

    pub fn log_density(&self, states: &Matrix, latents: &Matrix) -> Result<Vec<f64>> {
        ensure!(latents.shape() == (states.rows(), self.latent_dim), "latent shape mismatch");
        let h = self.heads(states)?;
        Ok((0..states.rows())
            .map(|i| gaussian_log_density(latents.row(i), h.mu.row(i), h.log_sigma.row(i)))
            .collect())
    }

    /// `KL(self(·|s) ‖ other(·|s))` per state.
    pub fn kl_to(&self, other: &LatentPolicy, states: &Matrix) -> Result<Vec<f64>> {
        ensure!(self.latent_dim == other.latent_dim, "latent dimensions differ");
        let (a, b) = (self.heads(states)?, other.heads(states)?);
        Ok((0..states.rows())
            .map(|i| gaussian_kl(a.mu.row(i), a.log_sigma.row(i), b.mu.row(i), b.log_sigma.row(i)))
            .collect())
    }
}

/// Draws `α ~ π(·|s)` for each state with exact log-densities.
pub fn policy_sample(policy: &LatentPolicy, states: &[GoalState], rng: &mut StreamRng) -> Result<(Matrix, Vec<f64>)> {
    policy.sample(&states_matrix(states), rng)
}

/// M-step: `π ← q` by parameter copy.
pub fn mstep_copy(q: &LatentPolicy, pi: &LatentPolicy) -> Result<LatentPolicy> {
    if !q.net.same_architecture(&pi.net) || q.latent_dim != pi.latent_dim {
        return Err(Error::Contract("M-step copy needs identical architectures".into()));
    }
    Ok(q.clone())
}

/// State-value baseline `V(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub net: Mlp,
}

impl ValueFunction {
    pub fn new(hidden: &[usize], rng: &mut StreamRng) -> Result<Self> {
        let mut specs: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::new(w, Activation::Tanh)).collect();
        specs.push(LayerSpec::new(1, Activation::Identity));
        Ok(Self {
            net: Mlp::new(2, &specs, rng)?,
        })
    }

    /// `V(s) = w·s + b`.
    pub fn linear() -> Self {
        Self {
            net: Mlp::from_layers(vec![Layer {
                weight: Matrix::zeros(1, 2),
                bias: vec![0.0],
                activation: Activation::Identity,
                batch_norm: None,
            }])
            .expect("valid layer"),
        }
    }

    pub fn predict(&self, states: &Matrix) -> Result<Vec<f64>> {
        Ok(self.net.forward(states)?.into_vec())
    }

    /// A single affine layer, for which least squares is exact.
    pub fn is_affine(&self) -> bool {
        let l = self.net.layers();
        l.len() == 1 && l[0].activation == Activation::Identity && l[0].batch_norm.is_none()
    }
}
