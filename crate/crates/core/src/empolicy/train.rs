//! Outer EM loop.

use serde::{Deserialize, Serialize};

use super::estep::{estep_update, RolloutBatch};
use super::policy::{mstep_copy, states_matrix, LatentPolicy, ValueFunction};
use super::value::value_fit;
use super::EmConfig;
use crate::error::{ensure, Error, Result};
use crate::genmodels::{GenerativeModel, PriorKind};
use crate::numkit::{Matrix, RngStream};
use crate::trajenv::{reward_from_end_state, Environment, GoalState};

/// One row of the training curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    /// Mean reward of the rollouts drawn from `π` at this iteration.
    pub mean_reward: f64,
    pub std_reward: f64,
    /// Mean `KL(q ‖ π)` on the batch after the E-step.
    pub mean_kl: f64,
    /// Fraction of latent coordinates clamped into the prior support.
    pub clamp_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct EmOutcome {
    pub policy: LatentPolicy,
    pub value: ValueFunction,
    pub curve: Vec<CurvePoint>,
    /// Iterations where the E-step fell back to an earlier inner iterate.
    pub reverts: usize,
    pub ratio_clamps: usize,
}

/// Draws goals and latents for iteration `it`; sample `i` only consumes
/// stream `(it, i)` so the batch does not depend on scheduling.
fn collect(
    model: &GenerativeModel,
    env: &Environment,
    pi: &LatentPolicy,
    batch_size: usize,
    it_rng: &RngStream,
) -> Result<(RolloutBatch, f64)> {
    let k = pi.latent_dim;
    let mut states = Vec::with_capacity(batch_size);
    let mut noise = Matrix::zeros(batch_size, k);
    for i in 0..batch_size {
        let mut r = it_rng.child(i as u64).rng();
        states.push(env.sample_goal(&mut r));
        for j in 0..k {
            noise.set(i, j, r.normal());
        }
    }
    let sm = states_matrix(&states);
    let (latents, log_pi) = pi.sample_with_noise(&sm, &noise)?;
    let mut clamped = 0usize;
    let decode_in = match model.prior.kind {
        PriorKind::Uniform => latents.map(|x| x.clamp(-1.0, 1.0)),
        PriorKind::StdNormal => latents.clone(),
    };
    if model.prior.kind == PriorKind::Uniform {
        clamped = latents.as_slice().iter().filter(|x| x.abs() > 1.0).count();
    }
    let trajectories = model.generate(&decode_in)?;
    let ends = env.exe_batch(&trajectories)?;
    let rewards: Vec<f64> = (0..batch_size)
        .map(|i| reward_from_end_state(ends.row(i), &states[i]))
        .collect();
    let clamp_fraction = clamped as f64 / (batch_size * k) as f64;
    Ok((
        RolloutBatch {
            states,
            latents,
            trajectories,
            advantages: vec![0.0; rewards.len()],
            rewards,
            log_pi,
        },
        clamp_fraction,
    ))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Runs `outer_iterations` of EM against `model` on `env`.
pub fn train_em(model: &GenerativeModel, env: &Environment, config: &EmConfig, rng: &RngStream) -> Result<EmOutcome> {
    config.validate()?;
    ensure!(
        model.traj_shape.len() == env.traj_len(),
        "model trajectory length {} != environment {}",
        model.traj_shape.len(),
        env.traj_len()
    );
    let k = model.latent_dim();
    let mut init = rng.named("init").rng();
    let mut pi = LatentPolicy::new(k, &config.policy_hidden, &mut init)?;
    let mut value = ValueFunction::new(&config.value_hidden, &mut init)?;
    let mut curve = Vec::with_capacity(config.outer_iterations);
    let (mut reverts, mut ratio_clamps) = (0, 0);

    for it in 0..config.outer_iterations {
        let it_rng = rng.descend(&[1, it as u64]);
        let (mut batch, clamp_fraction) = collect(model, env, &pi, config.batch_size, &it_rng)?;
        if !batch.rewards.iter().all(|r| r.is_finite()) {
            return Err(Error::NumericFailure {
                epoch: it,
                batch: 0,
                context: "non-finite reward".into(),
            });
        }
        let states = states_matrix(&batch.states);
        value = value_fit(&value, &states, &batch.rewards, config.value_steps, config.value_lr)?.value;
        let baseline = value.predict(&states)?;
        let mut adv: Vec<f64> = batch.rewards.iter().zip(&baseline).map(|(r, v)| r - v).collect();
        if config.normalize_advantages {
            let (m, s) = mean_std(&adv);
            for a in &mut adv {
                *a = if s > 1e-12 { (*a - m) / s } else { *a - m };
            }
        }
        batch.advantages = adv;

        let out = estep_update(&pi, &pi, &batch, config, &it_rng.named("estep"))?;
        reverts += out.reverted as usize;
        ratio_clamps += out.after.ratio_clamps;
        let (mean_reward, std_reward) = mean_std(&batch.rewards);
        curve.push(CurvePoint {
            iteration: it,
            mean_reward,
            std_reward,
            mean_kl: out.after.mean_kl,
            clamp_fraction,
        });
        pi = mstep_copy(&out.policy, &pi)?;
        if !pi.net.is_finite() {
            return Err(Error::NumericFailure {
                epoch: it,
                batch: 0,
                context: "non-finite policy parameters".into(),
            });
        }
    }
    Ok(EmOutcome {
        policy: pi,
        value,
        curve,
        reverts,
        ratio_clamps,
    })
}

/// Reward of a fixed latent for a goal (no rollout noise).
pub fn latent_reward(model: &GenerativeModel, env: &Environment, goal: &GoalState, latent: &[f64]) -> Result<f64> {
    let z = Matrix::from_vec(1, latent.len(), latent.to_vec())?;
    let t = model.generate(&z)?;
    env.terminal_reward(goal, t.row(0))
}
