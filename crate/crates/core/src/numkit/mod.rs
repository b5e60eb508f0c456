//! Numerical substrate: matrices, random streams, MLPs, Adam, least squares.

pub mod adam;
pub mod linalg;
pub mod matrix;
pub mod mlp;
pub mod rng;

pub use adam::{adam_step, AdamState};
pub use linalg::{lstsq, lstsq_with_fallback, LstsqSolution};
pub use matrix::{pairwise_sq_dists, sq_dist, Matrix};
pub use mlp::{sigmoid, Activation, BatchNorm, BnMode, ForwardCache, Gradients, Layer, LayerSpec, Mlp};
pub use rng::{RngStream, StreamRng};

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Max over entries of `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
