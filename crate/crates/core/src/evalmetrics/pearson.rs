//! Pearson correlation with a two-sided permutation p-value.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numkit::StreamRng;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    pub p_value: f64,
}

/// Sample correlation coefficient, clamped into `[-1, 1]`.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    ensure!(xs.len() == ys.len(), "length mismatch ({} vs {})", xs.len(), ys.len());
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if xs.is_empty() || constant(xs) || constant(ys) {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `p = (1 + #{|r_perm| ≥ |r|}) / (1 + permutations)` over shuffles of `ys`.
pub fn pearson(xs: &[f64], ys: &[f64], permutations: usize, rng: &mut StreamRng) -> Result<PearsonResult> {
    ensure!(xs.len() >= 3, "need at least 3 pairs, got {}", xs.len());
    ensure!(permutations > 0, "need at least one permutation");
    let r = pearson_r(xs, ys)?;
    let threshold = r.abs() - 1e-12;
    let mut shuffled = ys.to_vec();
    let mut hits = 0usize;
    for _ in 0..permutations {
        rng.shuffle(&mut shuffled);
        if pearson_r(xs, &shuffled)?.abs() >= threshold {
            hits += 1;
        }
    }
    Ok(PearsonResult {
        r,
        p_value: (hits + 1) as f64 / (permutations + 1) as f64,
    })
}
