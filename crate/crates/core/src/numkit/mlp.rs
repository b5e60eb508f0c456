//! Fully connected networks with hand-written backward passes.
//!
//! Each layer is `linear -> optional batch norm -> activation`. Weights are
//! stored `(out, in)` and inputs are batched row-wise, so a layer computes
//! `X Wᵀ + b`. Parameters are exposed as one flat vector in a fixed order
//! (per layer: weight, bias, BN scale, BN shift) so optimizers and gradient
//! checks can treat every network uniformly.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::StreamRng;
use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Tanh,
    Identity,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub batch_norm: Option<BatchNorm>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn param_count(&self) -> usize {
        let bn = self.batch_norm.as_ref().map_or(0, |b| 2 * b.scale.len());
        self.weight.rows() * self.weight.cols() + self.bias.len() + bn
    }
}

/// Which statistics batch-norm layers normalize with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Frozen running statistics (evaluation).
    Running,
}

/// One hidden/output layer specification used by [`Mlp::new`].
#[derive(Clone, Copy, Debug)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(out_dim: usize, activation: Activation) -> Self {
        Self {
            out_dim,
            activation,
            batch_norm: false,
        }
    }

    pub fn bn(out_dim: usize, activation: Activation) -> Self {
        Self {
            out_dim,
            activation,
            batch_norm: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpFile", into = "MlpFile")]
pub struct Mlp {
    layers: Vec<Layer>,
}

struct LayerCache {
    input: Matrix,
    pre: Matrix,
    /// normalized pre-activation and per-feature 1/sqrt(var+eps) (BN only)
    xhat: Option<Matrix>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    /// input to the activation
    act_in: Matrix,
    output: Matrix,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    mode: BnMode,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.layers.last().expect("non-empty network").output
    }

    /// Output of hidden layer `i` (post-activation).
    pub fn layer_output(&self, i: usize) -> &Matrix {
        &self.layers[i].output
    }
}

/// Gradients from [`Mlp::backward`].
pub struct Gradients {
    /// Flat, in [`Mlp::params`] order.
    pub params: Vec<f64>,
    pub input: Matrix,
}

impl Mlp {
    /// Randomly initialized network: weights and biases uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn new(input_dim: usize, specs: &[LayerSpec], rng: &mut StreamRng) -> Result<Self> {
        ensure!(!specs.is_empty(), "network needs at least one layer");
        ensure!(input_dim > 0, "network input dimension must be positive");
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for s in specs {
            ensure!(s.out_dim > 0, "layer output dimension must be positive");
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = Matrix::from_fn(s.out_dim, fan_in, |_, _| rng.uniform(-bound, bound));
            let bias = (0..s.out_dim).map(|_| rng.uniform(-bound, bound)).collect();
            layers.push(Layer {
                weight,
                bias,
                activation: s.activation,
                batch_norm: s.batch_norm.then(|| BatchNorm::new(s.out_dim)),
            });
            fan_in = s.out_dim;
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        ensure!(!layers.is_empty(), "network needs at least one layer");
        for (i, l) in layers.iter().enumerate() {
            ensure!(
                l.bias.len() == l.out_dim(),
                "layer {} bias length {} != {}",
                i,
                l.bias.len(),
                l.out_dim()
            );
            if let Some(bn) = &l.batch_norm {
                let d = l.out_dim();
                ensure!(
                    bn.scale.len() == d
                        && bn.shift.len() == d
                        && bn.running_mean.len() == d
                        && bn.running_var.len() == d,
                    "layer {} batch norm size mismatch",
                    i
                );
                ensure!(
                    bn.running_var.iter().all(|v| *v >= 0.0),
                    "layer {} negative running variance",
                    i
                );
            }
            if i > 0 {
                ensure!(
                    l.in_dim() == layers[i - 1].out_dim(),
                    "layer {} input {} != previous output {}",
                    i,
                    l.in_dim(),
                    layers[i - 1].out_dim()
                );
            }
        }
        Ok(Self { layers })
    }

    /// A single affine layer `x -> W x + b` with identity activation.
    pub fn affine(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        Self::from_layers(vec![Layer {
            weight,
            bias,
            activation: Activation::Identity,
            batch_norm: None,
        }])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(Layer::out_dim));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// True when both networks have identical layer shapes, activations and
    /// batch-norm placement.
    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.shape() == b.weight.shape()
                    && a.activation == b.activation
                    && a.batch_norm.is_some() == b.batch_norm.is_some()
            })
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(l.weight.as_slice());
            p.extend_from_slice(&l.bias);
            if let Some(bn) = &l.batch_norm {
                p.extend_from_slice(&bn.scale);
                p.extend_from_slice(&bn.shift);
            }
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        ensure!(
            p.len() == self.param_count(),
            "parameter vector length {} != {}",
            p.len(),
            self.param_count()
        );
        let mut off = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&p[off..off + dst.len()]);
            off += dst.len();
        };
        for l in &mut self.layers {
            take(l.weight.as_mut_slice());
            take(&mut l.bias);
            if let Some(bn) = &mut l.batch_norm {
                take(&mut bn.scale);
                take(&mut bn.shift);
            }
        }
        Ok(())
    }

    /// Evaluation forward pass (running batch-norm statistics).
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = input.clone();
        self.check_input(&x)?;
        for l in &self.layers {
            let mut z = x.gemm(false, &l.weight, true)?;
            z.add_row_vector(&l.bias);
            if let Some(bn) = &l.batch_norm {
                for i in 0..z.rows() {
                    for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                        let inv = 1.0 / (bn.running_var[j] + BN_EPS).sqrt();
                        *v = bn.scale[j] * (*v - bn.running_mean[j]) * inv + bn.shift[j];
                    }
                }
            }
            x = z.map(|v| l.activation.apply(v));
        }
        Ok(x)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        ensure!(
            x.cols() == self.input_dim(),
            "network input has {} columns, expected {}",
            x.cols(),
            self.input_dim()
        );
        Ok(())
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_cached(&self, input: &Matrix, mode: BnMode) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for l in &self.layers {
            let mut pre = x.gemm(false, &l.weight, true)?;
            pre.add_row_vector(&l.bias);
            let (act_in, xhat, inv_std, batch_mean, batch_var) = match &l.batch_norm {
                None => (pre.clone(), None, Vec::new(), Vec::new(), Vec::new()),
                Some(bn) => {
                    let (mean, var) = match mode {
                        BnMode::Batch => batch_moments(&pre),
                        BnMode::Running => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                    let xh = Matrix::from_fn(pre.rows(), pre.cols(), |i, j| {
                        (pre.get(i, j) - mean[j]) * inv[j]
                    });
                    let y = Matrix::from_fn(pre.rows(), pre.cols(), |i, j| {
                        bn.scale[j] * xh.get(i, j) + bn.shift[j]
                    });
                    (y, Some(xh), inv, mean, var)
                }
            };
            let output = act_in.map(|v| l.activation.apply(v));
            caches.push(LayerCache {
                input: x,
                pre,
                xhat,
                inv_std,
                batch_mean,
                batch_var,
                act_in,
                output: output.clone(),
            });
            x = output;
        }
        Ok(ForwardCache {
            layers: caches,
            mode,
        })
    }

    /// Exact gradients of `sum(upstream ⊙ output)` with respect to parameters
    /// and input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Gradients> {
        let out = cache.output();
        ensure!(
            upstream.shape() == out.shape(),
            "upstream gradient shape {:?} != output shape {:?}",
            upstream.shape(),
            out.shape()
        );
        let mut per_layer: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut grad = upstream.clone();
        for (l, c) in self.layers.iter().zip(&cache.layers).rev() {
            let b = grad.rows();
            // through activation
            let mut dy = grad;
            for i in 0..b {
                for (j, g) in dy.row_mut(i).iter_mut().enumerate() {
                    *g *= l.activation.derivative(c.act_in.get(i, j), c.output.get(i, j));
                }
            }
            // through batch norm
            let mut bn_grads: Option<(Vec<f64>, Vec<f64>)> = None;
            let dz = match (&l.batch_norm, &c.xhat) {
                (Some(bn), Some(xh)) => {
                    let d = dy.cols();
                    let mut dscale = vec![0.0; d];
                    let mut dshift = vec![0.0; d];
                    for i in 0..b {
                        for j in 0..d {
                            dscale[j] += dy.get(i, j) * xh.get(i, j);
                            dshift[j] += dy.get(i, j);
                        }
                    }
                    let dz = match cache.mode {
                        BnMode::Running => Matrix::from_fn(b, d, |i, j| {
                            dy.get(i, j) * bn.scale[j] * c.inv_std[j]
                        }),
                        BnMode::Batch => {
                            // dz = inv/B * (B*dxh - sum(dxh) - xh*sum(dxh*xh))
                            let bf = b as f64;
                            let mut sum_dxh = vec![0.0; d];
                            let mut sum_dxh_xh = vec![0.0; d];
                            for i in 0..b {
                                for j in 0..d {
                                    let dxh = dy.get(i, j) * bn.scale[j];
                                    sum_dxh[j] += dxh;
                                    sum_dxh_xh[j] += dxh * xh.get(i, j);
                                }
                            }
                            Matrix::from_fn(b, d, |i, j| {
                                let dxh = dy.get(i, j) * bn.scale[j];
                                c.inv_std[j] / bf
                                    * (bf * dxh - sum_dxh[j] - xh.get(i, j) * sum_dxh_xh[j])
                            })
                        }
                    };
                    bn_grads = Some((dscale, dshift));
                    dz
                }
                _ => dy,
            };
            let dw = dz.gemm(true, &c.input, false)?;
            let db = dz.col_sums();
            grad = dz.matmul(&l.weight)?;
            let mut g = dw.into_vec();
            g.extend(db);
            if let Some((s, t)) = bn_grads {
                g.extend(s);
                g.extend(t);
            }
            per_layer.push(g);
        }
        per_layer.reverse();
        Ok(Gradients {
            params: per_layer.concat(),
            input: grad,
        })
    }

    /// Moves batch-norm running statistics toward the batch statistics seen in
    /// a [`BnMode::Batch`] forward pass.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if cache.mode != BnMode::Batch {
            return;
        }
        for (l, c) in self.layers.iter_mut().zip(&cache.layers) {
            if let Some(bn) = &mut l.batch_norm {
                let b = c.pre.rows() as f64;
                let unbias = if b > 1.0 { b / (b - 1.0) } else { 1.0 };
                for j in 0..bn.running_mean.len() {
                    bn.running_mean[j] =
                        BN_MOMENTUM * bn.running_mean[j] + (1.0 - BN_MOMENTUM) * c.batch_mean[j];
                    bn.running_var[j] = BN_MOMENTUM * bn.running_var[j]
                        + (1.0 - BN_MOMENTUM) * c.batch_var[j] * unbias;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|x| x.is_finite())
            && self.layers.iter().all(|l| {
                l.batch_norm.as_ref().is_none_or(|bn| {
                    bn.running_mean.iter().chain(&bn.running_var).all(|x| x.is_finite())
                })
            })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Per-column mean and population variance.
fn batch_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mean = x.col_means();
    let n = x.rows().max(1) as f64;
    let mut var = vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for j in 0..var.len() {
            var[j] += (r[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Weight file layout.
#[derive(Serialize, Deserialize)]
struct MlpFile {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    batch_norm: Vec<Option<BatchNorm>>,
}

impl From<Mlp> for MlpFile {
    fn from(m: Mlp) -> Self {
        let layer_dims = m.layer_dims();
        let mut f = MlpFile {
            layer_dims,
            activations: Vec::new(),
            weights: Vec::new(),
            biases: Vec::new(),
            batch_norm: Vec::new(),
        };
        for l in m.layers {
            f.activations.push(l.activation);
            f.weights.push(l.weight);
            f.biases.push(l.bias);
            f.batch_norm.push(l.batch_norm);
        }
        f
    }
}

impl TryFrom<MlpFile> for Mlp {
    type Error = Error;
    fn try_from(f: MlpFile) -> Result<Self> {
        let n = f.weights.len();
        ensure!(
            f.activations.len() == n
                && f.biases.len() == n
                && f.batch_norm.len() == n
                && f.layer_dims.len() == n + 1,
            "weight file layer counts disagree"
        );
        let layers = f
            .weights
            .into_iter()
            .zip(f.biases)
            .zip(f.activations)
            .zip(f.batch_norm)
            .map(|(((weight, bias), activation), batch_norm)| Layer {
                weight,
                bias,
                activation,
                batch_norm,
            })
            .collect::<Vec<_>>();
        for (i, l) in layers.iter().enumerate() {
            ensure!(
                l.in_dim() == f.layer_dims[i] && l.out_dim() == f.layer_dims[i + 1],
                "weight file layer {} shape disagrees with layer_dims",
                i
            );
        }
        Mlp::from_layers(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng::RngStream;

    fn net(specs: &[LayerSpec], input: usize, seed: u64) -> Mlp {
        Mlp::new(input, specs, &mut RngStream::new(seed).rng()).unwrap()
    }

    #[test]
    fn identity_layer_weight_gradient_is_input() {
        let m = Mlp::affine(Matrix::from_rows(&[[0.7]]).unwrap(), vec![0.0]).unwrap();
        let x = Matrix::from_rows(&[[2.5]]).unwrap();
        let c = m.forward_cached(&x, BnMode::Batch).unwrap();
        let g = m.backward(&c, &Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(g.params, vec![2.5, 1.0]);
        assert_eq!(g.input.get(0, 0), 0.7);
    }

    #[test]
    fn relu_dead_layer_blocks_gradient() {
        let layer = Layer {
            weight: Matrix::from_rows(&[[1.0, 1.0], [2.0, -1.0]]).unwrap(),
            bias: vec![-100.0, -100.0],
            activation: Activation::ReLU,
            batch_norm: None,
        };
        let m = Mlp::from_layers(vec![layer]).unwrap();
        let x = Matrix::from_rows(&[[0.3, -0.2], [1.0, 2.0]]).unwrap();
        let c = m.forward_cached(&x, BnMode::Batch).unwrap();
        let g = m.backward(&c, &Matrix::filled(2, 2, 1.0)).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upstream_shape_checked() {
        let m = net(&[LayerSpec::new(3, Activation::Tanh)], 2, 0);
        let c = m.forward_cached(&Matrix::zeros(4, 2), BnMode::Batch).unwrap();
        assert!(m.backward(&c, &Matrix::zeros(4, 2)).is_err());
        assert!(m.forward(&Matrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn running_mode_matches_forward() {
        let mut m = net(
            &[
                LayerSpec::bn(5, Activation::ReLU),
                LayerSpec::new(2, Activation::Identity),
            ],
            3,
            1,
        );
        let x = Matrix::from_fn(6, 3, |i, j| (i as f64 - j as f64 * 0.5).sin());
        let c = m.forward_cached(&x, BnMode::Batch).unwrap();
        m.update_running_stats(&c);
        let a = m.forward(&x).unwrap();
        let b = m.forward_cached(&x, BnMode::Running).unwrap();
        assert_eq!(&a, b.output());
    }

    #[test]
    fn params_round_trip_and_json() {
        let m = net(
            &[
                LayerSpec::bn(4, Activation::ReLU),
                LayerSpec::new(3, Activation::Sigmoid),
            ],
            2,
            7,
        );
        let p = m.params();
        assert_eq!(p.len(), m.param_count());
        let mut m2 = net(
            &[
                LayerSpec::bn(4, Activation::ReLU),
                LayerSpec::new(3, Activation::Sigmoid),
            ],
            2,
            8,
        );
        m2.set_params(&p).unwrap();
        assert_eq!(m2.params(), p);
        let back = Mlp::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["layer_dims"], serde_json::json!([2, 4, 3]));
        assert_eq!(v["activations"], serde_json::json!(["ReLU", "Sigmoid"]));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let a = Layer {
            weight: Matrix::zeros(3, 2),
            bias: vec![0.0; 3],
            activation: Activation::ReLU,
            batch_norm: None,
        };
        let b = Layer {
            weight: Matrix::zeros(1, 4),
            bias: vec![0.0],
            activation: Activation::Identity,
            batch_norm: None,
        };
        assert!(Mlp::from_layers(vec![a, b]).is_err());
    }
}
