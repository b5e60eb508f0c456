//! Evaluation of generative models: MMD tests, DiPR, DwPR, k-NN precision
//! and recall, L3, and correlation of metrics with policy performance.

pub mod dipr;
pub mod dwpr;
pub mod knn;
pub mod l3;
pub mod mmd;
pub mod pearson;
pub mod report;

pub use dipr::{dipr, DimLink, DiprConfig, DiprResult, TopPairs};
pub use dwpr::{dwpr, DwprConfig, DwprDim, DwprResult};
pub use knn::{knn_radii, knn_sq_radii, manifold_fraction, precision_recall, PrConfig, PrecisionRecall};
pub use l3::{fit_affine, l3, AffineFit, L3Config, L3Result};
pub use mmd::{empirical_quantile, mmd2_unbiased, mmd_permutation_critical, mmd_test, MmdConfig, MmdTest};
pub use pearson::{pearson, pearson_r, PearsonResult};
pub use report::{correlate, evaluate, CorrelationReport, CorrelationRow, CorrelationSummary, EvalConfig, MetricReport, MetricSelection};

use crate::genmodels::Prior;
use crate::numkit::{Matrix, StreamRng};

/// Equidistant grid `I_d = -a + 2a(d-1)/(D-1)`, `d = 1..D`.
pub fn intervention_grid(a: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|d| -a + 2.0 * a * d as f64 / (count - 1) as f64)
        .collect()
}

/// `n` prior samples with coordinate `l` fixed to `value`.
pub fn intervened_latents(prior: &Prior, n: usize, l: usize, value: f64, rng: &mut StreamRng) -> Matrix {
    let mut z = prior.sample(n, rng);
    for i in 0..n {
        z.set(i, l, value);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        assert_eq!(intervention_grid(1.5, 5), vec![-1.5, -0.75, 0.0, 0.75, 1.5]);
        assert_eq!(intervention_grid(1.0, 2), vec![-1.0, 1.0]);
    }
}
