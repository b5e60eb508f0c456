//! E-step, M-step, value fit and outer-loop checks.

use genrl::empolicy::{
    estep_surrogate, estep_update, mstep_copy, states_matrix, train_em, value_fit, EmConfig, LatentPolicy,
    RolloutBatch, ValueFunction,
};
use genrl::genmodels::fixtures::{constant_model, inverse_dynamics};
use genrl::genmodels::Prior;
use genrl::numkit::{Matrix, RngStream, StreamRng};
use genrl::trajenv::{reward_from_end_state, Environment, GoalState};

fn goals(n: usize, rng: &mut StreamRng) -> Vec<GoalState> {
    let env = Environment::linear();
    (0..n).map(|_| env.sample_goal(rng)).collect()
}

fn policy(seed: u64) -> LatentPolicy {
    LatentPolicy::new(2, &[8], &mut RngStream::new(seed).rng()).unwrap()
}

fn nudged(p: &LatentPolicy, scale: f64, seed: u64) -> LatentPolicy {
    let mut r = RngStream::new(seed).rng();
    let mut q = p.clone();
    let params: Vec<f64> = q.net.params().iter().map(|w| w + scale * r.normal()).collect();
    q.net.set_params(&params).unwrap();
    q
}

fn batch(pi: &LatentPolicy, n: usize, advantages: impl Fn(usize) -> f64, seed: u64) -> RolloutBatch {
    let mut r = RngStream::new(seed).rng();
    let states = goals(n, &mut r);
    let (latents, log_pi) = pi.sample(&states_matrix(&states), &mut r).unwrap();
    RolloutBatch {
        states,
        latents,
        trajectories: Matrix::zeros(0, 0),
        rewards: vec![0.0; n],
        advantages: (0..n).map(advantages).collect(),
        log_pi,
    }
}

fn density_oracle(a: &[f64], mu: &[f64], ls: &[f64]) -> f64 {
    let mut total = 0.0;
    for j in 0..a.len() {
        let s = ls[j].exp();
        total += (-(a[j] - mu[j]).powi(2) / (2.0 * s * s)).exp().ln() - (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    }
    total
}

#[test]
fn log_densities_match_formula() {
    let pi = nudged(&policy(1), 0.3, 2);
    let mut r = RngStream::new(3).rng();
    let states = states_matrix(&goals(50, &mut r));
    let (latents, logp) = pi.sample(&states, &mut r).unwrap();
    let h = pi.heads(&states).unwrap();
    for i in 0..50 {
        let want = density_oracle(latents.row(i), h.mu.row(i), h.log_sigma.row(i));
        assert!((logp[i] - want).abs() < 1e-12, "{} vs {want}", logp[i]);
    }
}

#[test]
fn surrogate_at_q_equal_pi_is_mean_advantage() {
    let pi = nudged(&policy(4), 0.2, 5);
    let b = batch(&pi, 40, |i| (i as f64 * 0.37).sin(), 6);
    let (s, _) = estep_surrogate(&pi, &pi, &b, 1.0).unwrap();
    let mean = b.advantages.iter().sum::<f64>() / 40.0;
    assert!((s.value - mean).abs() < 1e-12);
    assert_eq!(s.mean_kl, 0.0);
}

#[test]
fn zero_advantages_leave_only_the_penalty() {
    let pi = policy(7);
    let q = nudged(&pi, 0.1, 8);
    let b = batch(&pi, 40, |_| 0.0, 9);
    let w = 2.5;
    let (s, _) = estep_surrogate(&q, &pi, &b, w).unwrap();
    assert!(s.mean_kl > 0.0);
    assert!((s.value + w * s.mean_kl).abs() < 1e-12);
    assert!(s.value < 0.0);
}

#[test]
fn importance_ratio_is_one_on_fresh_samples() {
    let pi = nudged(&policy(10), 0.2, 11);
    let b = batch(&pi, 64, |_| 1.0, 12);
    let again = pi.log_density(&states_matrix(&b.states), &b.latents).unwrap();
    for (a, c) in again.iter().zip(&b.log_pi) {
        assert_eq!((a - c).exp(), 1.0);
    }
}

fn em_config() -> EmConfig {
    EmConfig {
        policy_hidden: vec![8],
        ..EmConfig::default()
    }
}

#[test]
fn zero_advantages_keep_q_at_pi() {
    let pi = policy(13);
    let b = batch(&pi, 128, |_| 0.0, 14);
    let out = estep_update(&pi, &pi, &b, &em_config(), &RngStream::new(15)).unwrap();
    let kl = out.policy.kl_to(&pi, &states_matrix(&b.states)).unwrap();
    assert!(kl.iter().all(|&k| k < 1e-6));
}

#[test]
fn single_positive_latent_pulls_the_mean() {
    let pi = policy(16);
    let state = GoalState { target: [1.0, 0.5] };
    let s = states_matrix(&[state]);
    let mu0 = pi.heads(&s).unwrap().mu.row(0).to_vec();
    let target = [mu0[0] + 0.4, mu0[1] - 0.3];
    let latents = Matrix::from_rows(&[target]).unwrap();
    let log_pi = pi.log_density(&s, &latents).unwrap();
    let b = RolloutBatch {
        states: vec![state],
        latents,
        trajectories: Matrix::zeros(0, 0),
        rewards: vec![1.0],
        advantages: vec![1.0],
        log_pi,
    };
    let cfg = EmConfig {
        minibatch: 1,
        ..em_config()
    };
    let out = estep_update(&pi, &pi, &b, &cfg, &RngStream::new(17)).unwrap();
    let mu1 = out.policy.heads(&s).unwrap().mu.row(0).to_vec();
    let moved: f64 = (0..2).map(|j| (mu1[j] - mu0[j]) * (target[j] - mu0[j])).sum();
    assert!(moved > 0.0, "mean moved against the latent: {mu0:?} -> {mu1:?}");
}

fn displacement(a: &LatentPolicy, b: &LatentPolicy) -> f64 {
    a.net.params().iter().zip(b.net.params()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn heavy_penalty_pins_q_to_pi() {
    let pi = policy(18);
    let b = batch(&pi, 128, |i| if i % 3 == 0 { 1.5 } else { -0.75 }, 19);
    let rng = RngStream::new(20);
    let free = estep_update(&pi, &pi, &b, &em_config(), &rng).unwrap();
    let heavy_cfg = EmConfig {
        kl_weight: 1e6,
        ..em_config()
    };
    let heavy = estep_update(&pi, &pi, &b, &heavy_cfg, &rng).unwrap();
    let (d_free, d_heavy) = (displacement(&free.policy, &pi), displacement(&heavy.policy, &pi));
    assert!(d_free > 0.0);
    assert!(d_heavy < 1e-3 * d_free, "{d_heavy} vs {d_free}");
}

#[test]
fn copy_zeroes_kl_and_surrogate() {
    let pi = policy(21);
    let q = nudged(&pi, 0.2, 22);
    let copied = mstep_copy(&q, &pi).unwrap();
    assert_eq!(copied.net.params(), q.net.params());
    let mut r = RngStream::new(23).rng();
    let states = states_matrix(&goals(100, &mut r));
    assert!(copied.kl_to(&q, &states).unwrap().iter().all(|&k| k.abs() < 1e-12));
    let b = batch(&copied, 30, |_| 0.0, 24);
    assert_eq!(estep_surrogate(&q, &copied, &b, 1.0).unwrap().0.value, 0.0);
}

#[test]
fn copy_rejects_other_architectures() {
    assert!(mstep_copy(&policy(25), &LatentPolicy::new(2, &[4], &mut RngStream::new(0).rng()).unwrap()).is_err());
}

#[test]
fn value_fits_constant_rewards() {
    let mut r = RngStream::new(26).rng();
    let states = states_matrix(&goals(256, &mut r));
    let v = ValueFunction::new(&[32], &mut r).unwrap();
    let fit = value_fit(&v, &states, &vec![-0.4; 256], 2000, 1e-2).unwrap();
    assert!(fit.mse_after < 1e-4, "{}", fit.mse_after);
    assert!(fit.mse_after <= fit.mse_before);
}

#[test]
fn linear_value_recovers_linear_rewards() {
    let mut r = RngStream::new(27).rng();
    let states = states_matrix(&goals(256, &mut r));
    let rewards: Vec<f64> = (0..256).map(|i| 0.3 * states.get(i, 0) - 1.2 * states.get(i, 1) + 0.05).collect();
    let fit = value_fit(&ValueFunction::linear(), &states, &rewards, 0, 1e-2).unwrap();
    assert!(fit.mse_after < 1e-8, "{}", fit.mse_after);
}

#[test]
fn constant_decoder_curve_is_flat() {
    let env = Environment::linear();
    let traj = env.bell_trajectory([0.6, 1.1]);
    let end = env.exe(&traj).unwrap();
    let model = constant_model(&env, traj, Prior::std_normal(2)).unwrap();
    let cfg = EmConfig {
        outer_iterations: 20,
        ..em_config()
    };
    let out = train_em(&model, &env, &cfg, &RngStream::new(28)).unwrap();

    // Monte Carlo oracle for -E‖s_const − goal‖ over the goal region.
    let mut r = RngStream::new(29).rng();
    let oracle = (0..200_000).map(|_| reward_from_end_state(&end, &env.sample_goal(&mut r))).sum::<f64>() / 200_000.0;
    for p in &out.curve {
        let se = p.std_reward / (cfg.batch_size as f64).sqrt();
        assert!((p.mean_reward - oracle).abs() < 5.0 * se, "iteration {}: {} vs {oracle}", p.iteration, p.mean_reward);
    }
}

#[test]
fn inverse_dynamics_curve_rises_in_windows() {
    let env = Environment::linear();
    let model = inverse_dynamics(&env).unwrap();
    let cfg = EmConfig {
        outer_iterations: 100,
        ..EmConfig::default()
    };
    for seed in 0..3 {
        let out = train_em(&model, &env, &cfg, &RngStream::new(seed)).unwrap();
        let windows: Vec<f64> = out
            .curve
            .chunks(10)
            .map(|w| w.iter().map(|p| p.mean_reward).sum::<f64>() / w.len() as f64)
            .collect();
        for pair in windows.windows(2) {
            assert!(pair[1] >= pair[0] - 0.01, "seed {seed}: {windows:?}");
        }
    }
}

#[test]
fn em_is_deterministic() {
    let env = Environment::linear();
    let model = inverse_dynamics(&env).unwrap();
    let cfg = EmConfig {
        outer_iterations: 5,
        batch_size: 64,
        ..em_config()
    };
    let a = train_em(&model, &env, &cfg, &RngStream::new(30)).unwrap();
    let b = train_em(&model, &env, &cfg, &RngStream::new(30)).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.value.net.params(), b.value.net.params());
}
