//! Per-participant marginal log-likelihood with the random intercept written
//! as `u = s * b`, `b ~ N(0, 1)`, so that `s = 0` reduces to the fixed-effects
//! model without any special casing. The objective is even in `s`; the fitted
//! random-intercept standard deviation is `|s|`.
//!
//! Binomial groups use the Laplace approximation around the conditional mode
//! of `b`. Gaussian groups are quadratic in `b`, where the same expression is
//! the exact marginal likelihood.

use nalgebra::DVector;

use super::{Family, ModelFrame};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Parameter layout: `[beta_0 .. beta_{p-1}, s]`, followed by `ln(residual sd)`
/// for the Gaussian family. When `sigma_fixed` is set, `s` is dropped from the
/// free parameters and held at that value.
#[derive(Debug, Clone, Copy)]
pub struct MarginalLikelihood<'a> {
    pub frame: &'a ModelFrame,
    pub family: Family,
    pub sigma_fixed: Option<f64>,
}

/// Conditional mode of the standardized random effect for one group.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GroupMode {
    pub b: f64,
    pub loglik: f64,
}

impl<'a> MarginalLikelihood<'a> {
    pub fn new(frame: &'a ModelFrame, family: Family) -> Self {
        MarginalLikelihood { frame, family, sigma_fixed: None }
    }

    pub fn with_fixed_sigma(mut self, sigma: f64) -> Self {
        self.sigma_fixed = Some(sigma);
        self
    }

    pub fn n_beta(&self) -> usize {
        self.frame.x.ncols()
    }

    pub fn dim(&self) -> usize {
        let extra = match self.family {
            Family::BinomialLogit => 0,
            Family::GaussianIdentity => 1,
        };
        self.n_beta() + extra + usize::from(self.sigma_fixed.is_none())
    }

    /// Expands free parameters into `(beta, s, ln_sigma_e)`.
    fn unpack<'t>(&self, theta: &'t [f64]) -> (&'t [f64], f64, f64) {
        let p = self.n_beta();
        let (s, rest) = match self.sigma_fixed {
            Some(s) => (s, p),
            None => (theta[p], p + 1),
        };
        let tau = match self.family {
            Family::GaussianIdentity => theta[rest],
            Family::BinomialLogit => 0.0,
        };
        (&theta[..p], s, tau)
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, false).0
    }

    pub fn value_grad(&self, theta: &[f64]) -> (f64, DVector<f64>) {
        self.evaluate(theta, true)
    }

    /// Conditional modes `s * b_hat` of the random intercepts, one per group.
    pub fn random_effects(&self, theta: &[f64]) -> Vec<f64> {
        let (beta, s, tau) = self.unpack(theta);
        let eta0 = self.frame.linear_predictor(beta);
        self.frame
            .groups
            .iter()
            .map(|rows| {
                let b = match self.family {
                    Family::BinomialLogit => binomial_mode(self.frame, rows, &eta0, s).b,
                    Family::GaussianIdentity => gaussian_mode(self.frame, rows, &eta0, s, tau).b,
                };
                s * b
            })
            .collect()
    }

    fn evaluate(&self, theta: &[f64], want_grad: bool) -> (f64, DVector<f64>) {
        let p = self.n_beta();
        let (beta, s, tau) = self.unpack(theta);
        let eta0 = self.frame.linear_predictor(beta);
        // Full gradient over (beta, s, tau); free components are picked out below.
        let mut full = DVector::zeros(p + 2);
        let mut total = 0.0;
        for rows in &self.frame.groups {
            total += match self.family {
                Family::BinomialLogit => {
                    binomial_group(self.frame, rows, &eta0, s, want_grad, &mut full)
                }
                Family::GaussianIdentity => {
                    gaussian_group(self.frame, rows, &eta0, s, tau, want_grad, &mut full)
                }
            };
        }
        if !want_grad {
            return (total, DVector::zeros(0));
        }
        let mut grad = DVector::zeros(self.dim());
        grad.rows_mut(0, p).copy_from(&full.rows(0, p));
        let mut k = p;
        if self.sigma_fixed.is_none() {
            grad[k] = full[p];
            k += 1;
        }
        if self.family == Family::GaussianIdentity {
            grad[k] = full[p + 1];
        }
        (total, grad)
    }
}

fn binomial_inner(frame: &ModelFrame, rows: &[usize], eta0: &[f64], s: f64, b: f64) -> f64 {
    rows.iter()
        .map(|&j| {
            let eta = eta0[j] + s * b;
            frame.y[j] * eta - softplus(eta)
        })
        .sum::<f64>()
        - 0.5 * b * b
}

pub(crate) fn binomial_mode(frame: &ModelFrame, rows: &[usize], eta0: &[f64], s: f64) -> GroupMode {
    let mut b = 0.0;
    let mut f = binomial_inner(frame, rows, eta0, s, b);
    if s != 0.0 {
        for _ in 0..100 {
            let (mut score, mut sw) = (0.0, 0.0);
            for &j in rows {
                let mu = inv_logit(eta0[j] + s * b);
                score += frame.y[j] - mu;
                sw += mu * (1.0 - mu);
            }
            let g = s * score - b;
            let h = 1.0 + s * s * sw;
            if g.abs() <= 1e-14 * (1.0 + b.abs()) {
                break;
            }
            // Concave in b; halve the Newton step until the objective improves.
            // Gains below rounding are still accepted: the Laplace term depends
            // on the mode to first order, so it must be polished to full precision.
            let mut step = g / h;
            let slack = 1e-13 * (1.0 + f.abs());
            let mut accepted = false;
            for _ in 0..60 {
                let f_new = binomial_inner(frame, rows, eta0, s, b + step);
                if f_new >= f - slack {
                    b += step;
                    f = f_new;
                    accepted = step.abs() > 1e-15 * (1.0 + b.abs());
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
    GroupMode { b, loglik: f }
}

fn binomial_group(
    frame: &ModelFrame,
    rows: &[usize],
    eta0: &[f64],
    s: f64,
    want_grad: bool,
    grad: &mut DVector<f64>,
) -> f64 {
    let p = frame.x.ncols();
    let mode = binomial_mode(frame, rows, eta0, s);
    let b = mode.b;
    let (mut sy, mut sw, mut sw3) = (0.0, 0.0, 0.0);
    let mut score_x = vec![0.0; p];
    let mut wx = vec![0.0; p];
    let mut w3x = vec![0.0; p];
    for &j in rows {
        let mu = inv_logit(eta0[j] + s * b);
        let w = mu * (1.0 - mu);
        let w3 = w * (1.0 - 2.0 * mu);
        sy += frame.y[j] - mu;
        sw += w;
        sw3 += w3;
        if want_grad {
            for k in 0..p {
                let xk = frame.x[(j, k)];
                score_x[k] += (frame.y[j] - mu) * xk;
                wx[k] += w * xk;
                w3x[k] += w3 * xk;
            }
        }
    }
    let h = 1.0 + s * s * sw;
    let value = mode.loglik - 0.5 * h.ln();
    if want_grad {
        let dh_db = s * s * s * sw3;
        for k in 0..p {
            let db = -s * wx[k] / h;
            let dh = s * s * w3x[k] + dh_db * db;
            grad[k] += score_x[k] - 0.5 * dh / h;
        }
        let db_ds = (sy - s * b * sw) / h;
        let dh_ds = 2.0 * s * sw + s * s * b * sw3 + dh_db * db_ds;
        grad[p] += b * sy - 0.5 * dh_ds / h;
    }
    value
}

pub(crate) fn gaussian_mode(
    frame: &ModelFrame,
    rows: &[usize],
    eta0: &[f64],
    s: f64,
    tau: f64,
) -> GroupMode {
    let v = (2.0 * tau).exp();
    let n = rows.len() as f64;
    let resid: f64 = rows.iter().map(|&j| frame.y[j] - eta0[j]).sum();
    let h = 1.0 + s * s * n / v;
    let b = s * resid / v / h;
    let ss: f64 = rows
        .iter()
        .map(|&j| {
            let r = frame.y[j] - eta0[j] - s * b;
            r * r
        })
        .sum();
    let loglik = -n * (HALF_LN_2PI + tau) - 0.5 * ss / v - 0.5 * b * b;
    GroupMode { b, loglik }
}

fn gaussian_group(
    frame: &ModelFrame,
    rows: &[usize],
    eta0: &[f64],
    s: f64,
    tau: f64,
    want_grad: bool,
    grad: &mut DVector<f64>,
) -> f64 {
    let p = frame.x.ncols();
    let v = (2.0 * tau).exp();
    let n = rows.len() as f64;
    let mode = gaussian_mode(frame, rows, eta0, s, tau);
    let h = 1.0 + s * s * n / v;
    if want_grad {
        let b = mode.b;
        let (mut sr, mut ss) = (0.0, 0.0);
        for &j in rows {
            let r = frame.y[j] - eta0[j] - s * b;
            sr += r;
            ss += r * r;
            for k in 0..p {
                grad[k] += r * frame.x[(j, k)] / v;
            }
        }
        grad[p] += b * sr / v - s * n / (v * h);
        grad[p + 1] += -n + ss / v + s * s * n / (v * h);
    }
    mode.loglik - 0.5 * h.ln()
}
