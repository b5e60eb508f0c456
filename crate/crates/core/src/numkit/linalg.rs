//! Dense least squares via Householder QR.

use super::matrix::Matrix;
use crate::error::{ensure, Error, Result};

/// Ridge strength used when the design is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Relative threshold on |R_ii| below which the design is treated as rank
/// deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LstsqSolution {
    pub coef: Matrix,
    /// True when the ridge fallback produced `coef`.
    pub ridge: bool,
}

/// Minimizes `‖design · coef − targets‖²`. Fails on rank deficiency.
pub fn lstsq(design: &Matrix, targets: &Matrix) -> Result<Matrix> {
    check(design, targets)?;
    qr_solve(design, targets)
}

/// As [`lstsq`], but falls back to
/// `argmin ‖design · coef − targets‖² + 1e-8 ‖coef‖²` when rank deficient.
pub fn lstsq_with_fallback(design: &Matrix, targets: &Matrix) -> Result<LstsqSolution> {
    check(design, targets)?;
    match qr_solve(design, targets) {
        Ok(coef) => Ok(LstsqSolution { coef, ridge: false }),
        Err(Error::Singular(_)) => Ok(LstsqSolution {
            coef: ridge_solve(design, targets, RIDGE_LAMBDA)?,
            ridge: true,
        }),
        Err(e) => Err(e),
    }
}

fn check(design: &Matrix, targets: &Matrix) -> Result<()> {
    ensure!(
        design.rows() == targets.rows(),
        "lstsq row mismatch: design {} vs targets {}",
        design.rows(),
        targets.rows()
    );
    ensure!(
        design.rows() >= design.cols() && design.cols() > 0,
        "lstsq needs n >= d > 0, got {}x{}",
        design.rows(),
        design.cols()
    );
    Ok(())
}

fn qr_solve(design: &Matrix, targets: &Matrix) -> Result<Matrix> {
    let (n, d) = design.shape();
    let m = targets.cols();
    let mut a = design.clone();
    let mut y = targets.clone();
    let mut diag_max = 0.0f64;
    for k in 0..d {
        let norm = (k..n).map(|i| a.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Singular(format!("column {k} is zero")));
        }
        let alpha = if a.get(k, k) > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place below the diagonal
        let mut v: Vec<f64> = (k..n).map(|i| a.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..d {
                let dot: f64 = (k..n).map(|i| v[i - k] * a.get(i, j)).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    a.set(i, j, a.get(i, j) - f * v[i - k]);
                }
            }
            for j in 0..m {
                let dot: f64 = (k..n).map(|i| v[i - k] * y.get(i, j)).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    y.set(i, j, y.get(i, j) - f * v[i - k]);
                }
            }
        }
        diag_max = diag_max.max(a.get(k, k).abs());
    }
    for k in 0..d {
        if a.get(k, k).abs() <= RANK_TOL * diag_max.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!("rank deficient at column {k}")));
        }
    }
    // back substitution on the upper triangle
    let mut coef = Matrix::zeros(d, m);
    for j in 0..m {
        for k in (0..d).rev() {
            let s: f64 = ((k + 1)..d).map(|c| a.get(k, c) * coef.get(c, j)).sum();
            coef.set(k, j, (y.get(k, j) - s) / a.get(k, k));
        }
    }
    Ok(coef)
}

/// Solves `(AᵀA + λI) X = Aᵀ Y` by Cholesky.
fn ridge_solve(design: &Matrix, targets: &Matrix, lambda: f64) -> Result<Matrix> {
    let d = design.cols();
    let mut g = design.gemm(true, design, false)?;
    for i in 0..d {
        g.set(i, i, g.get(i, i) + lambda);
    }
    let rhs = design.gemm(true, targets, false)?;
    let l = cholesky(&g)?;
    let m = rhs.cols();
    let mut out = Matrix::zeros(d, m);
    for j in 0..m {
        let mut z = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|k| l.get(i, k) * z[k]).sum();
            z[i] = (rhs.get(i, j) - s) / l.get(i, i);
        }
        for i in (0..d).rev() {
            let s: f64 = ((i + 1)..d).map(|k| l.get(k, i) * out.get(k, j)).sum();
            out.set(i, j, (z[i] - s) / l.get(i, i));
        }
    }
    Ok(out)
}

fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum();
            if i == j {
                let v = a.get(i, i) - s;
                if v <= 0.0 {
                    return Err(Error::Singular("matrix not positive definite".into()));
                }
                l.set(i, i, v.sqrt());
            } else {
                l.set(i, j, (a.get(i, j) - s) / l.get(j, j));
            }
        }
    }
    Ok(l)
}
