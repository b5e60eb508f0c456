//! Disentangling precision and recall (DiP, DiR).
//!
//! For each latent dimension `l` and grid value `I_d`, end states of decoded
//! trajectories with `α_l = I_d` are compared, one end-state component at a
//! time, with training end states using MMD permutation tests. Significant
//! effects are averaged per `(l, j)`, each dimension is linked to the
//! component it moves most, and the strongest dimensions are scored.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mmd::{mmd_test, MmdConfig, MmdTest};
use super::{intervened_latents, intervention_grid};
use crate::error::{ensure, Error, Result};
use crate::genmodels::GenerativeModel;
use crate::numkit::{Matrix, RngStream};
use crate::trajenv::{Environment, TrajectoryDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopPairs {
    /// `min(N_s, N_α)` dimensions.
    MinNsNalpha,
    /// The three strongest dimensions (capped at `N_α`).
    Fixed3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiprConfig {
    pub interventions: usize,
    pub samples: usize,
    /// Grid half-width `a`; `None` uses the prior's convention.
    pub half_width: Option<f64>,
    pub mmd: MmdConfig,
    pub top_pairs: TopPairs,
}

impl Default for DiprConfig {
    fn default() -> Self {
        Self {
            interventions: 5,
            samples: 200,
            half_width: None,
            mmd: MmdConfig::default(),
            top_pairs: TopPairs::MinNsNalpha,
        }
    }
}

impl DiprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interventions < 2 || self.samples < 2 {
            return Err(Error::Config("DiPR needs at least 2 interventions and 2 samples".into()));
        }
        self.mmd.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimLink {
    pub latent: usize,
    /// Linked end-state component `c_g(l)`.
    pub component: Option<usize>,
    /// Averaged significant MMD² of the linked component (0 if none).
    pub d_g: f64,
    /// Per component: mean MMD² over significant tests, if any.
    pub component_means: Vec<Option<f64>>,
    /// Per component: number of significant `(d, repeat)` tests.
    pub significant: Vec<usize>,
    pub tests_per_component: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiprResult {
    pub dip: f64,
    pub dir: f64,
    pub per_dim: Vec<DimLink>,
    /// Latent dimensions scored, strongest first.
    pub selected: Vec<usize>,
}

/// One `(d, repeat)` outcome for every end-state component.
struct Cell {
    tests: Vec<MmdTest>,
}

fn column(m: &Matrix, j: usize) -> Matrix {
    Matrix::from_vec(m.rows(), 1, m.column(j)).expect("column shape")
}

/// Draws `n` end states from the dataset (without replacement when possible).
fn sample_end_states(dataset: &TrajectoryDataset, n: usize, rng: &mut crate::numkit::StreamRng) -> Matrix {
    let total = dataset.len();
    let idx: Vec<usize> = if total >= n {
        rng.permutation(total)[..n].to_vec()
    } else {
        (0..n).map(|_| rng.below(total)).collect()
    };
    dataset.end_states.select_rows(&idx)
}

pub fn dipr(
    model: &GenerativeModel,
    env: &Environment,
    dataset: &TrajectoryDataset,
    config: &DiprConfig,
    rng: &RngStream,
) -> Result<DiprResult> {
    config.validate()?;
    ensure!(!dataset.is_empty(), "DiPR needs a non-empty dataset");
    ensure!(
        model.traj_shape.len() == env.traj_len(),
        "model trajectory length {} != environment {}",
        model.traj_shape.len(),
        env.traj_len()
    );
    let n_alpha = model.latent_dim();
    let n_s = dataset.end_states.cols();
    let a = config.half_width.unwrap_or_else(|| model.prior.intervention_half_width());
    let grid = intervention_grid(a, config.interventions);
    let repeats = config.mmd.repeats;

    let jobs: Vec<(usize, usize)> = (0..n_alpha)
        .flat_map(|l| (0..grid.len()).map(move |d| (l, d)))
        .collect();
    let cells: Vec<Vec<Cell>> = jobs
        .par_iter()
        .map(|&(l, d)| -> Result<Vec<Cell>> {
            let cell_rng = rng.descend(&[l as u64, d as u64]);
            let z = intervened_latents(&model.prior, config.samples, l, grid[d], &mut cell_rng.child(0).rng());
            let s_g = env.exe_batch(&model.generate(&z)?)?;
            (0..repeats)
                .map(|r| {
                    let mut rr = cell_rng.child(r as u64 + 1).rng();
                    let s_r = sample_end_states(dataset, config.samples, &mut rr);
                    let tests = (0..n_s)
                        .map(|j| mmd_test(&column(&s_r, j), &column(&s_g, j), &config.mmd, &mut rr))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Cell { tests })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut per_dim = Vec::with_capacity(n_alpha);
    for l in 0..n_alpha {
        let mut sums = vec![0.0; n_s];
        let mut counts = vec![0usize; n_s];
        for d in 0..grid.len() {
            for cell in &cells[l * grid.len() + d] {
                for (j, t) in cell.tests.iter().enumerate() {
                    if t.significant {
                        sums[j] += t.statistic;
                        counts[j] += 1;
                    }
                }
            }
        }
        let component_means: Vec<Option<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        let mut component = None;
        let mut best = f64::NEG_INFINITY;
        for (j, m) in component_means.iter().enumerate() {
            if let Some(v) = *m {
                if v > best {
                    best = v;
                    component = Some(j);
                }
            }
        }
        per_dim.push(DimLink {
            latent: l,
            component,
            d_g: component.map_or(0.0, |_| best.max(0.0)),
            component_means,
            significant: counts,
            tests_per_component: grid.len() * repeats,
        });
    }

    let count = match config.top_pairs {
        TopPairs::MinNsNalpha => n_s.min(n_alpha),
        TopPairs::Fixed3 => 3.min(n_alpha),
    };
    let mut order: Vec<usize> = (0..n_alpha).collect();
    order.sort_by(|&x, &y| per_dim[y].d_g.total_cmp(&per_dim[x].d_g).then(x.cmp(&y)));
    let selected: Vec<usize> = order.into_iter().take(count).collect();
    let dip = selected.iter().map(|&l| per_dim[l].d_g).sum();
    let mut linked: Vec<usize> = selected.iter().filter_map(|&l| per_dim[l].component).collect();
    linked.sort_unstable();
    linked.dedup();
    Ok(DiprResult {
        dip,
        dir: linked.len() as f64 / n_s as f64,
        per_dim,
        selected,
    })
}
