use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::prior::Prior;
use crate::error::{ensure, Error, Result};
use crate::numkit::rng::splitmix64;
use crate::numkit::{Matrix, Mlp};

/// Trajectory layout `(T, M)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajShape {
    pub steps: usize,
    pub channels: usize,
}

impl TrajShape {
    pub fn new(steps: usize, channels: usize) -> Self {
        Self { steps, channels }
    }

    pub fn len(&self) -> usize {
        self.steps * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub type LatentFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Closure-backed decoder for analytic fixtures. Not serializable.
#[derive(Clone)]
pub struct AnalyticDecoder {
    pub name: String,
    pub f: Arc<LatentFn>,
}

impl AnalyticDecoder {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for AnalyticDecoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnalyticDecoder({})", self.name)
    }
}

/// Map from latent actions to flattened trajectories.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Decoder {
    /// Trained or hand-built network, evaluated with frozen BN statistics.
    Network { network: Mlp },
    /// Every latent maps to the same trajectory.
    Constant { output: Vec<f64> },
    /// Ignores the latent's meaning: each latent row is hashed with `salt`
    /// to pick a row of `pool`, so outputs are pool draws unrelated to α.
    Resample { pool: Matrix, salt: u64 },
    /// Clamps every latent coordinate to `±bound` before decoding with `inner`.
    LatentClamp { bound: f64, inner: Box<Decoder> },
    #[serde(skip)]
    Analytic(AnalyticDecoder),
}

impl Decoder {
    pub fn decode(&self, latents: &Matrix) -> Result<Matrix> {
        match self {
            Decoder::Network { network } => network.forward(latents),
            Decoder::Constant { output } => {
                let mut m = Matrix::zeros(latents.rows(), output.len());
                for i in 0..latents.rows() {
                    m.row_mut(i).copy_from_slice(output);
                }
                Ok(m)
            }
            Decoder::Resample { pool, salt } => {
                ensure!(pool.rows() > 0, "resampling decoder has an empty pool");
                let mut m = Matrix::zeros(latents.rows(), pool.cols());
                for (i, a) in latents.iter_rows().enumerate() {
                    let h = a
                        .iter()
                        .fold(splitmix64(*salt), |h, x| splitmix64(h ^ x.to_bits()));
                    let pick = (h % pool.rows() as u64) as usize;
                    m.row_mut(i).copy_from_slice(pool.row(pick));
                }
                Ok(m)
            }
            Decoder::LatentClamp { bound, inner } => {
                let b = *bound;
                inner.decode(&latents.map(|x| x.clamp(-b, b)))
            }
            Decoder::Analytic(a) => {
                let rows: Vec<Vec<f64>> = latents.iter_rows().map(|r| (a.f)(r)).collect();
                if rows.is_empty() {
                    return Ok(Matrix::zeros(0, 0));
                }
                Matrix::from_rows(&rows)
            }
        }
    }

    pub fn network(&self) -> Option<&Mlp> {
        match self {
            Decoder::Network { network } => Some(network),
            _ => None,
        }
    }
}

/// Decoder `g` together with its prior and trajectory layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerativeModel {
    pub decoder: Decoder,
    pub prior: Prior,
    pub traj_shape: TrajShape,
}

impl GenerativeModel {
    pub fn new(decoder: Decoder, prior: Prior, traj_shape: TrajShape) -> Result<Self> {
        if let Decoder::Network { network } = &decoder {
            ensure!(
                network.input_dim() == prior.dim,
                "decoder input {} != latent dim {}",
                network.input_dim(),
                prior.dim
            );
            ensure!(
                network.output_dim() == traj_shape.len(),
                "decoder output {} != trajectory length {}",
                network.output_dim(),
                traj_shape.len()
            );
        }
        Ok(Self {
            decoder,
            prior,
            traj_shape,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.dim
    }

    /// Decodes each latent row into a flattened trajectory.
    pub fn generate(&self, latents: &Matrix) -> Result<Matrix> {
        ensure!(
            latents.cols() == self.prior.dim,
            "latent width {} != latent dim {}",
            latents.cols(),
            self.prior.dim
        );
        let out = self.decoder.decode(latents)?;
        if latents.rows() > 0 {
            ensure!(
                out.cols() == self.traj_shape.len(),
                "decoder produced width {}, expected {}",
                out.cols(),
                self.traj_shape.len()
            );
        }
        if !out.is_finite() {
            return Err(Error::NumericFailure {
                epoch: 0,
                batch: 0,
                context: "decoder produced non-finite trajectory".into(),
            });
        }
        Ok(out)
    }

    /// Draws `n` prior latents and decodes them.
    pub fn sample(&self, n: usize, rng: &mut crate::numkit::StreamRng) -> Result<(Matrix, Matrix)> {
        let z = self.prior.sample(n, rng);
        let t = self.generate(&z)?;
        Ok((z, t))
    }

    /// Same model with latents clamped to `±bound` before decoding.
    pub fn with_latent_clamp(&self, bound: f64) -> Self {
        Self {
            decoder: Decoder::LatentClamp {
                bound,
                inner: Box::new(self.decoder.clone()),
            },
            ..self.clone()
        }
    }
}
