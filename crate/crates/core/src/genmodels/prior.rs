use serde::{Deserialize, Serialize};

use crate::numkit::{Matrix, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    /// N(0, I)
    StdNormal,
    /// U(-1, 1) per coordinate
    Uniform,
}

/// Latent prior `p(α)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub kind: PriorKind,
    pub dim: usize,
}

impl Prior {
    pub fn std_normal(dim: usize) -> Self {
        Self {
            kind: PriorKind::StdNormal,
            dim,
        }
    }

    pub fn uniform(dim: usize) -> Self {
        Self {
            kind: PriorKind::Uniform,
            dim,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Matrix {
        Matrix::from_fn(n, self.dim, |_, _| self.sample_scalar(rng))
    }

    pub fn sample_scalar(&self, rng: &mut StreamRng) -> f64 {
        match self.kind {
            PriorKind::StdNormal => rng.normal(),
            PriorKind::Uniform => rng.uniform(-1.0, 1.0),
        }
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            PriorKind::StdNormal => 1.0,
            PriorKind::Uniform => 1.0 / 3.0,
        }
    }

    /// Half-width of the default intervention grid: 1.5 for N(0,1), 1 for U(-1,1).
    pub fn intervention_half_width(&self) -> f64 {
        match self.kind {
            PriorKind::StdNormal => 1.5,
            PriorKind::Uniform => 1.0,
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match self.kind {
            PriorKind::StdNormal => x.is_finite(),
            PriorKind::Uniform => (-1.0..=1.0).contains(&x),
        }
    }

    /// Bounded support, if any.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            PriorKind::StdNormal => None,
            PriorKind::Uniform => Some((-1.0, 1.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    #[test]
    fn samples_in_support_and_centered() {
        for prior in [Prior::std_normal(3), Prior::uniform(3)] {
            let n = 100_000;
            let s = prior.sample(n, &mut RngStream::new(4).rng());
            assert!(s.as_slice().iter().all(|&x| prior.in_support(x)));
            let sigma = (prior.variance() / n as f64).sqrt();
            for m in s.col_means() {
                assert!((m - prior.mean()).abs() < 5.0 * sigma);
            }
        }
    }
}
