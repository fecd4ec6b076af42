//! Adjusted predictions, the between-group contrast and per-trial slopes,
//! each with delta-method standard errors.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::descriptive::{normal_two_sided_p, Z_975};
use crate::glmm::{inv_logit, Family, GlmmFit, ModelFrame, Term};
use crate::quadrature::standard_normal_rule;

/// How the random intercept enters an adjusted prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalMode {
    /// Random intercept set to zero (a typical participant).
    #[default]
    Conditional,
    /// Averaged over `N(0, sigma_u^2)` (population average).
    Integrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl Estimate {
    pub fn wald(estimate: f64, std_error: f64) -> Self {
        let z = if std_error > 0.0 {
            estimate / std_error
        } else if estimate == 0.0 {
            0.0
        } else {
            estimate.signum() * f64::INFINITY
        };
        Estimate {
            estimate,
            std_error,
            z,
            p_value: normal_two_sided_p(z),
            ci_lower: estimate - Z_975 * std_error,
            ci_upper: estimate + Z_975 * std_error,
        }
    }

    pub fn excludes_zero(&self) -> bool {
        self.ci_lower > 0.0 || self.ci_upper < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub family: Family,
    pub mode: MarginalMode,
    /// Index 0 is the audio-only group, index 1 the audio-haptic group.
    pub predictions: [Estimate; 2],
    /// `predictions[1] - predictions[0]`.
    pub contrast: Estimate,
    pub slopes: [Estimate; 2],
}

/// Per-row response value and its first two derivatives with respect to the
/// linear predictor, averaged over the random intercept if requested.
struct Link {
    family: Family,
    nodes: Vec<(f64, f64)>,
}

impl Link {
    fn new(fit: &GlmmFit, mode: MarginalMode) -> Self {
        let nodes = match (fit.family, mode) {
            (Family::BinomialLogit, MarginalMode::Integrated) if fit.sigma_u > 0.0 => {
                let (z, w) = standard_normal_rule(40);
                z.into_iter().map(|z| z * fit.sigma_u).zip(w).collect()
            }
            _ => vec![(0.0, 1.0)],
        };
        Link { family: fit.family, nodes }
    }

    fn eval(&self, eta: f64) -> (f64, f64, f64) {
        match self.family {
            Family::GaussianIdentity => (eta, 1.0, 0.0),
            Family::BinomialLogit => self.nodes.iter().fold((0.0, 0.0, 0.0), |acc, &(u, w)| {
                let p = inv_logit(eta + u);
                let d1 = p * (1.0 - p);
                (acc.0 + w * p, acc.1 + w * d1, acc.2 + w * d1 * (1.0 - 2.0 * p))
            }),
        }
    }
}

/// Averages over the observed rows with `haptic` forced to `group`; returns
/// `(prediction, d prediction/d beta, slope, d slope/d beta)`.
fn group_average(
    fit: &GlmmFit,
    frame: &ModelFrame,
    link: &Link,
    group: f64,
) -> (f64, DVector<f64>, f64, DVector<f64>) {
    let p = fit.beta.len();
    let beta = DVector::from_column_slice(&fit.beta);
    // d(design row)/d(trial) at this group.
    let dtrial = DVector::from_iterator(
        p,
        fit.terms.iter().map(|t| match t {
            Term::Trial => 1.0,
            Term::HapticTrial => group,
            _ => 0.0,
        }),
    );
    let slope_coef = dtrial.dot(&beta);
    let mut pred = 0.0;
    let mut mean_d1 = 0.0;
    let mut g_pred = DVector::zeros(p);
    let mut g_d1 = DVector::zeros(p);
    for &(_, trial) in &frame.covariates {
        let x = DVector::from_vec(frame.design_row(group, trial));
        let (mu, d1, d2) = link.eval(x.dot(&beta));
        pred += mu;
        mean_d1 += d1;
        g_pred.axpy(d1, &x, 1.0);
        g_d1.axpy(d2, &x, 1.0);
    }
    let n = frame.covariates.len() as f64;
    pred /= n;
    mean_d1 /= n;
    g_pred /= n;
    g_d1 /= n;
    let slope = slope_coef * mean_d1;
    let g_slope = &dtrial * mean_d1 + g_d1 * slope_coef;
    (pred, g_pred, slope, g_slope)
}

fn delta_se(fit: &GlmmFit, grad: &DVector<f64>) -> f64 {
    let v = fit.vcov_matrix();
    (grad.transpose() * v * grad)[(0, 0)].max(0.0).sqrt()
}

pub fn marginal_predictions(fit: &GlmmFit, frame: &ModelFrame, mode: MarginalMode) -> MarginalSummary {
    let link = Link::new(fit, mode);
    let (p0, gp0, s0, gs0) = group_average(fit, frame, &link, 0.0);
    let (p1, gp1, s1, gs1) = group_average(fit, frame, &link, 1.0);
    let gc = &gp1 - &gp0;
    MarginalSummary {
        family: fit.family,
        mode,
        predictions: [Estimate::wald(p0, delta_se(fit, &gp0)), Estimate::wald(p1, delta_se(fit, &gp1))],
        contrast: Estimate::wald(p1 - p0, delta_se(fit, &gc)),
        slopes: [Estimate::wald(s0, delta_se(fit, &gs0)), Estimate::wald(s1, delta_se(fit, &gs1))],
    }
}

/// Difference of adjusted predictions `group_a - group_b`.
pub fn contrast(fit: &GlmmFit, frame: &ModelFrame, mode: MarginalMode, group_a: u8, group_b: u8) -> Estimate {
    let link = Link::new(fit, mode);
    let (pa, ga, _, _) = group_average(fit, frame, &link, group_a as f64);
    let (pb, gb, _, _) = group_average(fit, frame, &link, group_b as f64);
    let g = ga - gb;
    Estimate::wald(pa - pb, delta_se(fit, &g))
}

/// Prediction for one group at each listed trial number, random intercept
/// handled as in `mode`.
pub fn prediction_curve(fit: &GlmmFit, mode: MarginalMode, group: u8, trials: &[f64]) -> Vec<Estimate> {
    let link = Link::new(fit, mode);
    let beta = DVector::from_column_slice(&fit.beta);
    trials
        .iter()
        .map(|&t| {
            let x = DVector::from_iterator(fit.beta.len(), fit.terms.iter().map(|term| term.value(group as f64, t)));
            let (mu, d1, _) = link.eval(x.dot(&beta));
            Estimate::wald(mu, delta_se(fit, &(x * d1)))
        })
        .collect()
}
