//! Least-squares fit of the value baseline to observed rewards.

use super::policy::ValueFunction;
use crate::error::{ensure, Result};
use crate::numkit::{lstsq_with_fallback, AdamState, BnMode, Matrix};

#[derive(Clone, Debug)]
pub struct ValueFit {
    pub value: ValueFunction,
    pub mse_before: f64,
    pub mse_after: f64,
}

fn mse(v: &ValueFunction, states: &Matrix, rewards: &[f64]) -> Result<f64> {
    let p = v.predict(states)?;
    Ok(p.iter().zip(rewards).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / rewards.len() as f64)
}

/// Minimizes the mean squared error of `V(s_i)` against `r_i`.
///
/// An affine value function is solved exactly by least squares; otherwise
/// `steps` full-batch Adam steps are taken and the best iterate is kept, so
/// the returned error never exceeds the starting error.
pub fn value_fit(value: &ValueFunction, states: &Matrix, rewards: &[f64], steps: usize, lr: f64) -> Result<ValueFit> {
    ensure!(!rewards.is_empty(), "value fit needs at least one sample");
    ensure!(states.rows() == rewards.len(), "state and reward counts differ");
    let mse_before = mse(value, states, rewards)?;
    if value.is_affine() {
        let design = Matrix::from_fn(states.rows(), 3, |i, j| if j < 2 { states.get(i, j) } else { 1.0 });
        let targets = Matrix::from_vec(rewards.len(), 1, rewards.to_vec())?;
        let coef = lstsq_with_fallback(&design, &targets)?.coef;
        let mut fitted = value.clone();
        fitted
            .net
            .set_params(&[coef.get(0, 0), coef.get(1, 0), coef.get(2, 0)])?;
        let mse_after = mse(&fitted, states, rewards)?;
        return Ok(if mse_after <= mse_before {
            ValueFit {
                value: fitted,
                mse_before,
                mse_after,
            }
        } else {
            ValueFit {
                value: value.clone(),
                mse_before,
                mse_after: mse_before,
            }
        });
    }
    let mut current = value.clone();
    let mut params = current.net.params();
    let mut adam = AdamState::new(params.len(), lr);
    let mut best = (mse_before, current.clone());
    let n = rewards.len() as f64;
    for _ in 0..steps {
        let cache = current.net.forward_cached(states, BnMode::Running)?;
        let out = cache.output();
        let up = Matrix::from_fn(out.rows(), 1, |i, _| 2.0 * (out.get(i, 0) - rewards[i]) / n);
        let g = current.net.backward(&cache, &up)?;
        adam.update(&mut params, &g.params)?;
        current.net.set_params(&params)?;
        let m = mse(&current, states, rewards)?;
        if m < best.0 {
            best = (m, current.clone());
        }
    }
    Ok(ValueFit {
        value: best.1,
        mse_before,
        mse_after: best.0,
    })
}
