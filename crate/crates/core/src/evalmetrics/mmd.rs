//! Unbiased squared MMD with a Gaussian kernel and its permutation test.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numkit::{pairwise_sq_dists, Matrix, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmdConfig {
    /// Kernel `exp(-γ‖x - y‖²)`.
    pub gamma: f64,
    pub permutations: usize,
    pub eta: f64,
    /// Repeats `p` of each intervention test with fresh training samples.
    pub repeats: usize,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            gamma: 15.0,
            permutations: 100,
            eta: 0.001,
            repeats: 10,
        }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config("eta must lie in (0, 1)".into()));
        }
        if self.permutations == 0 || self.repeats == 0 {
            return Err(Error::Config("permutations and repeats must be positive".into()));
        }
        Ok(())
    }
}

fn kernel_matrix(a: &Matrix, b: &Matrix, gamma: f64) -> Result<Matrix> {
    Ok(pairwise_sq_dists(a, b)?.map(|d| (-gamma * d).exp()))
}

/// Unbiased estimate of MMD²; the within-set sums skip the diagonal.
pub fn mmd2_unbiased(s_r: &Matrix, s_g: &Matrix, gamma: f64) -> Result<f64> {
    let (m, n) = (s_r.rows(), s_g.rows());
    ensure!(m >= 2 && n >= 2, "MMD needs at least two samples per set (got {m} and {n})");
    ensure!(s_r.cols() == s_g.cols(), "feature dimensions differ");
    let off_diag = |k: &Matrix| k.as_slice().iter().sum::<f64>() - (0..k.rows()).map(|i| k.get(i, i)).sum::<f64>();
    let krr = off_diag(&kernel_matrix(s_r, s_r, gamma)?);
    let kgg = off_diag(&kernel_matrix(s_g, s_g, gamma)?);
    let krg: f64 = kernel_matrix(s_r, s_g, gamma)?.as_slice().iter().sum();
    let (mf, nf) = (m as f64, n as f64);
    Ok(krr / (mf * (mf - 1.0)) + kgg / (nf * (nf - 1.0)) - 2.0 * krg / (mf * nf))
}

/// Outcome of one permutation test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdTest {
    pub statistic: f64,
    pub critical: f64,
    pub significant: bool,
}

/// `inf{x : F̂(x) ≥ q}` of the empirical distribution of `values`.
pub fn empirical_quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    values[idx]
}

/// Pooled kernel matrix with the fast resplit statistic.
struct Pooled {
    k: Matrix,
    n: usize,
}

impl Pooled {
    fn new(s_r: &Matrix, s_g: &Matrix, gamma: f64) -> Result<Self> {
        ensure!(
            s_r.rows() == s_g.rows(),
            "permutation test needs equal set sizes ({} vs {})",
            s_r.rows(),
            s_g.rows()
        );
        ensure!(s_r.rows() >= 2, "permutation test needs at least two samples per set");
        let pool = s_r.vstack(s_g)?;
        Ok(Self {
            k: kernel_matrix(&pool, &pool, gamma)?,
            n: s_r.rows(),
        })
    }

    /// MMD² for the split `x = order[..n]`, `y = order[n..]`.
    fn split_stat(&self, order: &[usize]) -> f64 {
        let n = self.n;
        let (x, y) = order.split_at(n);
        let block = |a: &[usize], b: &[usize]| -> f64 {
            a.iter()
                .map(|&i| {
                    let row = self.k.row(i);
                    b.iter().map(|&j| row[j]).sum::<f64>()
                })
                .sum()
        };
        let diag = |a: &[usize]| a.iter().map(|&i| self.k.get(i, i)).sum::<f64>();
        let sxx = block(x, x) - diag(x);
        let syy = block(y, y) - diag(y);
        let sxy = block(x, y);
        let nf = n as f64;
        sxx / (nf * (nf - 1.0)) + syy / (nf * (nf - 1.0)) - 2.0 * sxy / (nf * nf)
    }

    fn critical(&self, config: &MmdConfig, rng: &mut StreamRng) -> f64 {
        let mut vals: Vec<f64> = (0..config.permutations)
            .map(|_| self.split_stat(&rng.permutation(2 * self.n)))
            .collect();
        empirical_quantile(&mut vals, 1.0 - config.eta)
    }
}

/// `(1 - η)`-quantile of MMD² over random resplits of the pooled samples.
pub fn mmd_permutation_critical(s_r: &Matrix, s_g: &Matrix, config: &MmdConfig, rng: &mut StreamRng) -> Result<f64> {
    config.validate()?;
    Ok(Pooled::new(s_r, s_g, config.gamma)?.critical(config, rng))
}

/// Observed MMD² against its permutation critical value; significant when
/// the statistic strictly exceeds `c_η`.
pub fn mmd_test(s_r: &Matrix, s_g: &Matrix, config: &MmdConfig, rng: &mut StreamRng) -> Result<MmdTest> {
    config.validate()?;
    let pooled = Pooled::new(s_r, s_g, config.gamma)?;
    let identity: Vec<usize> = (0..2 * pooled.n).collect();
    let statistic = pooled.split_stat(&identity);
    let critical = pooled.critical(config, rng);
    Ok(MmdTest {
        statistic,
        critical,
        significant: statistic > critical,
    })
}
