//! Disentanglement with precision and recall (DwPR).
//!
//! The reference set `T^p` holds `n·D` trajectories decoded from prior
//! samples and is drawn once per model. For each latent dimension `l`, the
//! intervention set `T^l` is the union over the grid of `n` trajectories with
//! `α_l = I_d`. Then `δ(l) = precision(T^p, T^l) − recall(T^p, T^l)`: a
//! dimension that controls the output pins `T^l` to thin slices of the
//! reference manifold, so precision stays high while recall drops.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::{knn_sq_radii, manifold_fraction};
use super::{intervened_latents, intervention_grid};
use crate::error::{ensure, Error, Result};
use crate::genmodels::GenerativeModel;
use crate::numkit::{Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwprConfig {
    pub interventions: usize,
    /// Samples per intervention `n`.
    pub samples: usize,
    pub k: usize,
    pub half_width: Option<f64>,
}

impl Default for DwprConfig {
    fn default() -> Self {
        Self {
            interventions: 5,
            samples: 400,
            k: 3,
            half_width: None,
        }
    }
}

impl DwprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interventions < 2 || self.k == 0 || self.interventions * self.samples < self.k + 1 {
            return Err(Error::Config("DwPR needs D >= 2, k >= 1 and n·D >= k + 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwprDim {
    pub latent: usize,
    pub precision: f64,
    pub recall: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwprResult {
    pub per_dim: Vec<DwprDim>,
    pub delta1: f64,
    /// Second largest δ (equal to `delta1` for a one-dimensional latent).
    pub delta2: f64,
    pub delta_avg: f64,
    /// The reference set had only identical rows (all radii zero).
    pub degenerate: bool,
}

pub fn dwpr(model: &GenerativeModel, config: &DwprConfig, rng: &RngStream) -> Result<DwprResult> {
    config.validate()?;
    let n_alpha = model.latent_dim();
    ensure!(n_alpha >= 1, "model has no latent dimensions");
    let total = config.samples * config.interventions;
    let (_, reference) = model.sample(total, &mut rng.named("reference").rng())?;
    let ref_radii = knn_sq_radii(&reference, config.k)?;
    let degenerate = reference.iter_rows().all(|r| r == reference.row(0));
    let a = config.half_width.unwrap_or_else(|| model.prior.intervention_half_width());
    let grid = intervention_grid(a, config.interventions);

    let per_dim: Vec<DwprDim> = (0..n_alpha)
        .into_par_iter()
        .map(|l| -> Result<DwprDim> {
            let mut rows: Option<Matrix> = None;
            for (d, &v) in grid.iter().enumerate() {
                let z = intervened_latents(&model.prior, config.samples, l, v, &mut rng.descend(&[l as u64, d as u64]).rng());
                let t = model.generate(&z)?;
                rows = Some(match rows {
                    None => t,
                    Some(acc) => acc.vstack(&t)?,
                });
            }
            let t_l = rows.expect("grid is non-empty");
            let l_radii = knn_sq_radii(&t_l, config.k)?;
            let precision = manifold_fraction(&reference, &ref_radii, &t_l)?;
            let recall = manifold_fraction(&t_l, &l_radii, &reference)?;
            Ok(DwprDim {
                latent: l,
                precision,
                recall,
                delta: precision - recall,
            })
        })
        .collect::<Result<_>>()?;

    let mut deltas: Vec<f64> = per_dim.iter().map(|d| d.delta).collect();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let delta1 = deltas[0];
    let delta2 = deltas.get(1).copied().unwrap_or(delta1);
    Ok(DwprResult {
        per_dim,
        delta1,
        delta2,
        delta_avg: (delta1 + delta2) / 2.0,
        degenerate,
    })
}
