//! Damped Newton ascent with a finite-difference Hessian of the analytic gradient.

use nalgebra::{DMatrix, DVector};

use super::laplace::MarginalLikelihood;
use crate::error::{Result, StatsError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Stop once the Newton decrement `g' (-H)^-1 g` drops below this.
    pub decrement_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iter: 200, decrement_tol: 1e-16 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
}

/// Central differences of the analytic gradient, symmetrized.
pub fn numeric_hessian(obj: &MarginalLikelihood<'_>, theta: &[f64]) -> DMatrix<f64> {
    let d = theta.len();
    let mut h = DMatrix::zeros(d, d);
    let mut work = theta.to_vec();
    for j in 0..d {
        let step = 1e-5 * theta[j].abs().max(1.0);
        work[j] = theta[j] + step;
        let (_, gp) = obj.value_grad(&work);
        work[j] = theta[j] - step;
        let (_, gm) = obj.value_grad(&work);
        work[j] = theta[j];
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Solves `(A + lambda I) x = g` for the smallest lambda in a fixed ladder
/// that makes the shifted matrix positive definite.
fn damped_solve(a: &DMatrix<f64>, g: &DVector<f64>, start: usize) -> Option<(DVector<f64>, usize)> {
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(1e-8, f64::max);
    for rung in start..40 {
        let lambda = if rung == 0 { 0.0 } else { scale * 1e-10 * 10f64.powi(rung as i32 - 1) };
        let mut shifted = a.clone();
        for i in 0..a.nrows() {
            shifted[(i, i)] += lambda;
        }
        if let Some(chol) = shifted.cholesky() {
            return Some((chol.solve(g), rung));
        }
    }
    None
}

pub fn maximize(
    obj: &MarginalLikelihood<'_>,
    theta0: Vec<f64>,
    opts: OptimOptions,
) -> Result<OptimResult> {
    let mut theta = theta0;
    let (mut value, mut grad) = obj.value_grad(&theta);
    if !value.is_finite() {
        return Err(StatsError::NotConverged { iterations: 0, grad_norm: f64::NAN });
    }
    for iter in 1..=opts.max_iter {
        let neg_h = -numeric_hessian(obj, &theta);
        let mut rung = 0;
        let mut moved = false;
        while let Some((delta, used)) = damped_solve(&neg_h, &grad, rung) {
            let decrement = grad.dot(&delta);
            if decrement.abs() < opts.decrement_tol * (1.0 + value.abs()) {
                return Ok(OptimResult { theta, value, gradient: grad, iterations: iter });
            }
            let mut t = 1.0;
            for _ in 0..50 {
                let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect();
                let v = obj.value(&trial);
                if v.is_finite() && v >= value {
                    let (nv, ng) = obj.value_grad(&trial);
                    let gain = nv - value;
                    theta = trial;
                    value = nv;
                    grad = ng;
                    moved = true;
                    // A step that no longer changes anything means we sit at the optimum
                    // up to rounding.
                    if gain <= 1e-15 * (1.0 + value.abs()) && t * delta.amax() < 1e-12 {
                        return Ok(OptimResult { theta, value, gradient: grad, iterations: iter });
                    }
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
            rung = used + 1;
        }
        if !moved {
            return Err(StatsError::NotConverged { iterations: iter, grad_norm: grad.amax() });
        }
    }
    Err(StatsError::NotConverged { iterations: opts.max_iter, grad_norm: grad.amax() })
}
