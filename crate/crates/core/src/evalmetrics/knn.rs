//! k-nearest-neighbor manifold precision and recall.
//!
//! Each set defines a manifold: the union of balls around its points, each
//! with radius equal to the distance to the point's k-th nearest *other*
//! point in the same set. Precision is the fraction of generated points that
//! fall on the real manifold; recall swaps the roles.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numkit::{pairwise_sq_dists, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrConfig {
    pub k: usize,
    /// Training trajectories drawn for the real set.
    pub n_real: usize,
    /// Generated trajectories.
    pub n_gen: usize,
}

impl Default for PrConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n_real: 1000,
            n_gen: 1000,
        }
    }
}

impl PrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_real <= self.k || self.n_gen <= self.k {
            return Err(Error::Config("need k >= 1 and sample sizes above k".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

/// Squared k-NN radii (self excluded).
pub fn knn_sq_radii(t: &Matrix, k: usize) -> Result<Vec<f64>> {
    ensure!(k >= 1, "k must be at least 1");
    ensure!(t.rows() > k, "need more than k = {k} points, got {}", t.rows());
    let d = pairwise_sq_dists(t, t)?;
    Ok((0..t.rows())
        .map(|i| {
            let mut others: Vec<f64> = d
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &v)| v)
                .collect();
            let (_, kth, _) = others.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            *kth
        })
        .collect())
}

/// Distance from each row to its k-th nearest other row.
pub fn knn_radii(t: &Matrix, k: usize) -> Result<Vec<f64>> {
    Ok(knn_sq_radii(t, k)?.into_iter().map(f64::sqrt).collect())
}

/// Fraction of `queries` rows inside the manifold of `reference`.
pub fn manifold_fraction(reference: &Matrix, sq_radii: &[f64], queries: &Matrix) -> Result<f64> {
    ensure!(sq_radii.len() == reference.rows(), "one radius per reference row");
    if queries.rows() == 0 {
        return Ok(0.0);
    }
    let d = pairwise_sq_dists(queries, reference)?;
    let inside = d
        .iter_rows()
        .filter(|row| row.iter().zip(sq_radii).any(|(dist, r)| dist <= r))
        .count();
    Ok(inside as f64 / queries.rows() as f64)
}

pub fn precision_recall(t_r: &Matrix, t_g: &Matrix, k: usize) -> Result<PrecisionRecall> {
    ensure!(t_r.cols() == t_g.cols(), "feature dimensions differ");
    let rr = knn_sq_radii(t_r, k)?;
    let rg = knn_sq_radii(t_g, k)?;
    Ok(PrecisionRecall {
        precision: manifold_fraction(t_r, &rr, t_g)?,
        recall: manifold_fraction(t_g, &rg, t_r)?,
    })
}
