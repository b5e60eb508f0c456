//! E-step: improve the variational policy `q` against importance-weighted
//! advantages while a KL penalty keeps it near `π`.
//!
//! ```text
//! L(q) = mean_i [ ρ_i A_i − w · KL(q(·|s_i) ‖ π(·|s_i)) ],   ρ_i = q(α_i|s_i) / π(α_i|s_i)
//! ```

use serde::{Deserialize, Serialize};

use super::policy::{gaussian_kl, gaussian_log_density, states_matrix, Heads, LatentPolicy};
use super::EmConfig;
use crate::error::{ensure, Result};
use crate::numkit::{AdamState, BnMode, Matrix, RngStream};
use crate::trajenv::GoalState;

/// Log-ratio clamp guarding `exp` overflow.
pub const LOG_RATIO_CLAMP: f64 = 20.0;

/// Rollouts collected under `π` for one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub states: Vec<GoalState>,
    /// Drawn from `π` (never from `q`).
    pub latents: Matrix,
    pub trajectories: Matrix,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    /// `log π(α_i | s_i)` at collection time.
    pub log_pi: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            states: idx.iter().map(|&i| self.states[i]).collect(),
            latents: self.latents.select_rows(idx),
            trajectories: if self.trajectories.rows() == self.len() {
                self.trajectories.select_rows(idx)
            } else {
                self.trajectories.clone()
            },
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            log_pi: idx.iter().map(|&i| self.log_pi[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub value: f64,
    pub mean_kl: f64,
    /// Samples whose log-ratio hit the clamp.
    pub ratio_clamps: usize,
}

/// Surrogate value and its gradient with respect to `q`'s parameters
/// (in [`crate::numkit::Mlp::params`] order).
pub fn estep_surrogate(
    q: &LatentPolicy,
    pi: &LatentPolicy,
    batch: &RolloutBatch,
    kl_weight: f64,
) -> Result<(Surrogate, Vec<f64>)> {
    ensure!(!batch.is_empty(), "empty rollout batch");
    ensure!(q.latent_dim == pi.latent_dim, "policy latent dimensions differ");
    ensure!(
        batch.latents.shape() == (batch.len(), q.latent_dim) && batch.advantages.len() == batch.len(),
        "rollout batch fields are misaligned"
    );
    let states = states_matrix(&batch.states);
    let hp = pi.heads(&states)?;
    let cache = q.net.forward_cached(&states, BnMode::Running)?;
    let hq = q.heads_from_output(cache.output());
    let (value, upstream) = surrogate_terms(&hq, &hp, batch, kl_weight, q.latent_dim);
    let grads = q.net.backward(&cache, &upstream.0)?;
    Ok((
        Surrogate {
            value,
            mean_kl: upstream.1,
            ratio_clamps: upstream.2,
        },
        grads.params,
    ))
}

/// Value plus (d value / d net output, mean KL, clamp count).
fn surrogate_terms(hq: &Heads, hp: &Heads, batch: &RolloutBatch, w: f64, k: usize) -> (f64, (Matrix, f64, usize)) {
    let n = batch.len();
    let nf = n as f64;
    let mut value = 0.0;
    let mut kl_sum = 0.0;
    let mut clamps = 0;
    let mut up = Matrix::zeros(n, 2 * k);
    for i in 0..n {
        let (mq, lq) = (hq.mu.row(i), hq.log_sigma.row(i));
        let (mp, lp) = (hp.mu.row(i), hp.log_sigma.row(i));
        let alpha = batch.latents.row(i);
        // log π is recomputed from π's current parameters so that the ratio
        // is exactly 1 when q == π.
        let log_ratio = gaussian_log_density(alpha, mq, lq) - gaussian_log_density(alpha, mp, lp);
        let clamped = log_ratio.abs() > LOG_RATIO_CLAMP;
        clamps += clamped as usize;
        let rho = log_ratio.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp();
        let a = batch.advantages[i];
        let kl = gaussian_kl(mq, lq, mp, lp);
        value += (rho * a - w * kl) / nf;
        kl_sum += kl;
        let ra = if clamped { 0.0 } else { rho * a };
        for j in 0..k {
            let vq = (2.0 * lq[j]).exp();
            let vp = (2.0 * lp[j]).exp();
            let diff = alpha[j] - mq[j];
            let d_mu = ra * diff / vq - w * (mq[j] - mp[j]) / vp;
            up.set(i, j, d_mu / nf);
            if hq.active[i * k + j] {
                let d_ls = ra * (-1.0 + diff * diff / vq) - w * (-1.0 + vq / vp);
                up.set(i, k + j, d_ls / nf);
            }
        }
    }
    (value, (up, kl_sum / nf, clamps))
}

#[derive(Clone, Debug)]
pub struct EstepOutcome {
    pub policy: LatentPolicy,
    pub before: Surrogate,
    pub after: Surrogate,
    /// The last inner step lowered the surrogate and the best-seen `q` was kept.
    pub reverted: bool,
}

/// `inner_epochs` passes of Adam ascent over shuffled minibatches, keeping
/// the best full-batch surrogate seen (so the result never scores below the
/// starting `q`).
pub fn estep_update(
    q: &LatentPolicy,
    pi: &LatentPolicy,
    batch: &RolloutBatch,
    config: &EmConfig,
    rng: &RngStream,
) -> Result<EstepOutcome> {
    let (before, _) = estep_surrogate(q, pi, batch, config.kl_weight)?;
    let mut current = q.clone();
    let mut params = current.net.params();
    let mut adam = AdamState::new(params.len(), config.policy_lr);
    let mut best = (before, current.clone());
    let mut last = before;
    let mb = config.minibatch.max(1);
    for epoch in 0..config.inner_epochs {
        let order = rng.child(epoch as u64).rng().permutation(batch.len());
        for idx in order.chunks(mb) {
            let sub = batch.subset(idx);
            let (_, g) = estep_surrogate(&current, pi, &sub, config.kl_weight)?;
            let neg: Vec<f64> = g.iter().map(|x| -x).collect();
            adam.update(&mut params, &neg)?;
            current.net.set_params(&params)?;
        }
        let (s, _) = estep_surrogate(&current, pi, batch, config.kl_weight)?;
        last = s;
        if s.value > best.0.value {
            best = (s, current.clone());
        }
    }
    let reverted = last.value < best.0.value;
    assert!(best.0.value >= before.value, "E-step lowered the surrogate");
    Ok(EstepOutcome {
        policy: best.1,
        before,
        after: best.0,
        reverted,
    })
}
