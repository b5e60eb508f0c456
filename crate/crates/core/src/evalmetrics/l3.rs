//! Latent local linearity (L3): how well an affine map explains the
//! latent → end-state composite inside small latent neighborhoods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::genmodels::GenerativeModel;
use crate::numkit::{lstsq_with_fallback, Matrix, RngStream, StreamRng};
use crate::trajenv::Environment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct L3Config {
    pub epsilon: f64,
    pub centers: usize,
    pub neighbors: usize,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for L3Config {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            centers: 50,
            neighbors: 500,
            train_count: 350,
            test_count: 150,
        }
    }
}

impl L3Config {
    pub fn validate(&self) -> Result<()> {
        if self.train_count + self.test_count != self.neighbors {
            return Err(Error::Config("train_count + test_count must equal neighbors".into()));
        }
        if !(self.epsilon > 0.0) || self.centers == 0 || self.test_count == 0 {
            return Err(Error::Config("epsilon, centers and test_count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    /// `N_s × N_α`
    pub a: Matrix,
    pub b: Vec<f64>,
    pub train_mse: f64,
    pub test_mse: f64,
    /// The ridge fallback was needed.
    pub ridge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L3Result {
    pub mean_test_mse: f64,
    pub fits: Vec<AffineFit>,
    pub ridge_fallbacks: usize,
}

/// Uniform draw from the Euclidean ball of radius `eps` around `center`.
pub fn sample_ball(center: &[f64], eps: f64, rng: &mut StreamRng) -> Vec<f64> {
    let d = center.len();
    let dir = loop {
        let v = rng.normal_vec(d);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
        }
    };
    let r = eps * rng.uniform(0.0, 1.0).powf(1.0 / d as f64);
    center.iter().zip(dir).map(|(c, u)| c + r * u).collect()
}

fn design(latents: &Matrix) -> Matrix {
    let k = latents.cols();
    Matrix::from_fn(latents.rows(), k + 1, |i, j| if j < k { latents.get(i, j) } else { 1.0 })
}

fn mse(design: &Matrix, coef: &Matrix, targets: &Matrix) -> Result<f64> {
    let pred = design.matmul(coef)?;
    let n = targets.as_slice().len() as f64;
    Ok(pred
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Affine fit `[α, 1] → s` on the first `train_count` rows, scored on the rest.
pub fn fit_affine(latents: &Matrix, end_states: &Matrix, train_count: usize) -> Result<AffineFit> {
    ensure!(latents.rows() == end_states.rows(), "latent and end-state counts differ");
    ensure!(train_count < latents.rows(), "no test rows left");
    let x = design(latents);
    let train: Vec<usize> = (0..train_count).collect();
    let test: Vec<usize> = (train_count..latents.rows()).collect();
    let (xtr, ytr) = (x.select_rows(&train), end_states.select_rows(&train));
    let (xte, yte) = (x.select_rows(&test), end_states.select_rows(&test));
    let sol = lstsq_with_fallback(&xtr, &ytr)?;
    let k = latents.cols();
    let coef_t = sol.coef.transpose();
    let a = Matrix::from_fn(end_states.cols(), k, |i, j| coef_t.get(i, j));
    let b = (0..end_states.cols()).map(|i| coef_t.get(i, k)).collect();
    Ok(AffineFit {
        a,
        b,
        train_mse: mse(&xtr, &sol.coef, &ytr)?,
        test_mse: mse(&xte, &sol.coef, &yte)?,
        ridge: sol.ridge,
    })
}

pub fn l3(model: &GenerativeModel, env: &Environment, config: &L3Config, rng: &RngStream) -> Result<L3Result> {
    config.validate()?;
    ensure!(
        model.traj_shape.len() == env.traj_len(),
        "model trajectory length {} != environment {}",
        model.traj_shape.len(),
        env.traj_len()
    );
    let centers = model.prior.sample(config.centers, &mut rng.named("centers").rng());
    let fits: Vec<AffineFit> = (0..config.centers)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.child(i as u64).rng();
            let rows: Vec<Vec<f64>> = (0..config.neighbors)
                .map(|_| sample_ball(centers.row(i), config.epsilon, &mut r))
                .collect();
            let z = Matrix::from_rows(&rows)?;
            let s = env.exe_batch(&model.generate(&z)?)?;
            fit_affine(&z, &s, config.train_count)
        })
        .collect::<Result<_>>()?;
    let mean_test_mse = fits.iter().map(|f| f.test_mse).sum::<f64>() / fits.len() as f64;
    let ridge_fallbacks = fits.iter().filter(|f| f.ridge).count();
    Ok(L3Result {
        mean_test_mse,
        fits,
        ridge_fallbacks,
    })
}
