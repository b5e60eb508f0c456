//! Hand-built decoders with known behavior, used to pin metric and policy
//! results and to build deliberately crippled models.

use super::decoder::{AnalyticDecoder, Decoder, GenerativeModel, TrajShape};
use super::prior::Prior;
use crate::error::{ensure, Result};
use crate::numkit::{Matrix, Mlp, RngStream};
use crate::trajenv::{DatasetManifest, Environment, TrajectoryDataset, CHANNELS};

fn shape(env: &Environment) -> TrajShape {
    TrajShape::new(env.steps, CHANNELS)
}

/// Single affine layer whose output is the bell trajectory reaching the
/// integrated coordinates `a·α + b` (end state for the integrator, joint
/// angles for the arm).
pub fn bell_affine_network(env: &Environment, a: &Matrix, b: [f64; 2]) -> Result<Mlp> {
    ensure!(a.rows() == CHANNELS, "coordinate map must have {} rows", CHANNELS);
    let w = env.bell_profile();
    let total: f64 = w.iter().sum();
    let k = a.cols();
    let mut weight = Matrix::zeros(env.traj_len(), k);
    let mut bias = vec![0.0; env.traj_len()];
    for (t, wt) in w.iter().enumerate() {
        let f = wt / (env.dt * total);
        for m in 0..CHANNELS {
            let r = t * CHANNELS + m;
            for c in 0..k {
                weight.set(r, c, a.get(m, c) * f);
            }
            bias[r] = b[m] * f;
        }
    }
    Mlp::affine(weight, bias)
}

pub fn affine_model(env: &Environment, a: &Matrix, b: [f64; 2], prior: Prior) -> Result<GenerativeModel> {
    ensure!(prior.dim == a.cols(), "prior dim {} != map width {}", prior.dim, a.cols());
    GenerativeModel::new(
        Decoder::Network {
            network: bell_affine_network(env, a, b)?,
        },
        prior,
        shape(env),
    )
}

/// `Exe(g(α)) = α` on the integrator, with a uniform prior.
pub fn identity_composite(env: &Environment) -> Result<GenerativeModel> {
    affine_model(env, &Matrix::identity(2), [0.0, 0.0], Prior::uniform(2))
}

/// Inverse dynamics for the integrator: `α ∈ [-1, 1]²` maps affinely onto
/// the goal region (`Exe(g(α)) = center + half_widths ⊙ α`).
pub fn inverse_dynamics(env: &Environment) -> Result<GenerativeModel> {
    let c = env.goal_region.center();
    let h = env.goal_region.half_widths();
    let a = Matrix::from_rows(&[[h[0], 0.0], [0.0, h[1]]])?;
    affine_model(env, &a, c, Prior::uniform(2))
}

/// Integrated coordinates `(α₁², α₂)`.
pub fn quadratic_model(env: &Environment, prior: Prior) -> Result<GenerativeModel> {
    ensure!(prior.dim == 2, "quadratic fixture needs a 2-D prior");
    let e = env.clone();
    GenerativeModel::new(
        Decoder::Analytic(AnalyticDecoder::new("quadratic", move |a| {
            e.bell_trajectory([a[0] * a[0], a[1]])
        })),
        prior,
        shape(env),
    )
}

pub fn constant_model(env: &Environment, trajectory: Vec<f64>, prior: Prior) -> Result<GenerativeModel> {
    ensure!(trajectory.len() == env.traj_len(), "constant trajectory has wrong length");
    GenerativeModel::new(Decoder::Constant { output: trajectory }, prior, shape(env))
}

/// Decoder that returns a pool row chosen by hashing the latent.
pub fn resampling_model(env: &Environment, pool: Matrix, prior: Prior, salt: u64) -> Result<GenerativeModel> {
    ensure!(pool.cols() == env.traj_len(), "pool width != trajectory length");
    GenerativeModel::new(Decoder::Resample { pool, salt }, prior, shape(env))
}

/// Dataset of `count` trajectories decoded from prior samples.
pub fn model_dataset(model: &GenerativeModel, env: &Environment, count: usize, rng: &RngStream) -> Result<TrajectoryDataset> {
    let (_, trajs) = model.sample(count, &mut rng.rng())?;
    TrajectoryDataset::from_trajectories(
        DatasetManifest {
            seed: rng.seed,
            noise_scale: 0.0,
            count,
            env: env.clone(),
        },
        trajs,
    )
}
