//! Random-intercept mixed models for accuracy (binomial, logit link) and
//! response time (Gaussian, identity link), fitted by maximum likelihood.

mod laplace;
mod optim;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descriptive::{normal_two_sided_p, Z_975};
use crate::error::{Result, StatsError};
use crate::table::ObservationTable;

pub use laplace::MarginalLikelihood;
pub(crate) use laplace::inv_logit;
pub use optim::{numeric_hessian, OptimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    BinomialLogit,
    GaussianIdentity,
}

/// Fixed-effect columns built from the `haptic` flag and the trial number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Haptic,
    Trial,
    HapticTrial,
}

impl Term {
    pub fn value(self, haptic: f64, trial: f64) -> f64 {
        match self {
            Term::Intercept => 1.0,
            Term::Haptic => haptic,
            Term::Trial => trial,
            Term::HapticTrial => haptic * trial,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Term::Intercept => "(Intercept)",
            Term::Haptic => "haptic",
            Term::Trial => "trial",
            Term::HapticTrial => "haptic:trial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    ResponseTime,
}

/// Model definition; the random part is always an intercept per participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmSpec {
    pub family: Family,
    pub outcome: Outcome,
    pub terms: Vec<Term>,
}

const INTERACTION: [Term; 4] = [Term::Intercept, Term::Haptic, Term::Trial, Term::HapticTrial];

impl GlmmSpec {
    /// `correct ~ haptic * trial + (1 | participant)`, binomial.
    pub fn accuracy() -> Self {
        GlmmSpec { family: Family::BinomialLogit, outcome: Outcome::Correct, terms: INTERACTION.to_vec() }
    }

    /// `response_time ~ haptic * trial + (1 | participant)`, Gaussian.
    pub fn response_time() -> Self {
        GlmmSpec {
            family: Family::GaussianIdentity,
            outcome: Outcome::ResponseTime,
            terms: INTERACTION.to_vec(),
        }
    }

    pub fn intercept_only(family: Family, outcome: Outcome) -> Self {
        GlmmSpec { family, outcome, terms: vec![Term::Intercept] }
    }
}

/// Numeric design for one model: rows grouped by participant.
#[derive(Debug, Clone)]
pub struct ModelFrame {
    pub terms: Vec<Term>,
    /// `(haptic, trial)` per row, kept to rebuild counterfactual rows.
    pub covariates: Vec<(f64, f64)>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
    pub group_labels: Vec<String>,
}

impl ModelFrame {
    pub fn from_table(table: &ObservationTable, spec: &GlmmSpec) -> Result<Self> {
        let covariates = table.rows.iter().map(|r| (r.haptic as f64, r.trial_number as f64)).collect();
        let y = table
            .rows
            .iter()
            .map(|r| match spec.outcome {
                Outcome::Correct => r.correct as f64,
                Outcome::ResponseTime => r.response_time_s,
            })
            .collect();
        let labels: Vec<&str> = table.rows.iter().map(|r| r.participant_id.as_str()).collect();
        Self::from_parts(&spec.terms, covariates, y, &labels)
    }

    pub fn from_parts(
        terms: &[Term],
        covariates: Vec<(f64, f64)>,
        y: Vec<f64>,
        row_groups: &[&str],
    ) -> Result<Self> {
        let n = y.len();
        if covariates.len() != n || row_groups.len() != n {
            return Err(StatsError::InvalidTable("column lengths differ".into()));
        }
        if terms.is_empty() {
            return Err(StatsError::RankDeficient("no fixed-effect terms".into()));
        }
        let mut group_labels: Vec<String> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, g) in row_groups.iter().enumerate() {
            match group_labels.iter().position(|l| l == g) {
                Some(k) => groups[k].push(i),
                None => {
                    group_labels.push(g.to_string());
                    groups.push(vec![i]);
                }
            }
        }
        if groups.len() < 2 {
            return Err(StatsError::InsufficientData(format!(
                "need at least 2 participants, got {}",
                groups.len()
            )));
        }
        let x = DMatrix::from_fn(n, terms.len(), |i, k| terms[k].value(covariates[i].0, covariates[i].1));
        let frame = ModelFrame { terms: terms.to_vec(), covariates, x, y, groups, group_labels };
        frame.check_rank()?;
        Ok(frame)
    }

    fn check_rank(&self) -> Result<()> {
        let p = self.x.ncols();
        if self.x.nrows() < p {
            return Err(StatsError::RankDeficient(format!("{} rows for {} columns", self.x.nrows(), p)));
        }
        // Column scaling keeps the trial covariate from dominating the condition number.
        let mut scaled = self.x.clone();
        for k in 0..p {
            let norm = scaled.column(k).norm();
            if norm == 0.0 {
                return Err(StatsError::RankDeficient(format!("column `{}` is zero", self.terms[k].name())));
            }
            scaled.column_mut(k).scale_mut(1.0 / norm);
        }
        let sv = scaled.singular_values();
        let max = sv.max();
        if sv.min() <= 1e-10 * max {
            return Err(StatsError::RankDeficient(format!(
                "columns {:?} are linearly dependent",
                self.terms.iter().map(|t| t.name()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn design_row(&self, haptic: f64, trial: f64) -> Vec<f64> {
        self.terms.iter().map(|t| t.value(haptic, trial)).collect()
    }

    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (&self.x * DVector::from_column_slice(beta)).as_slice().to_vec()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Hold the random-intercept SD at this value instead of estimating it.
    pub fix_sigma: Option<f64>,
    pub optim: OptimOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmFit {
    pub family: Family,
    pub terms: Vec<Term>,
    pub beta: Vec<f64>,
    pub sigma_u: f64,
    pub residual_sigma: Option<f64>,
    /// Covariance of `beta` from the observed information at the optimum.
    pub vcov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_abs: f64,
    pub u_hat: Vec<f64>,
    pub group_labels: Vec<String>,
    pub n_obs: usize,
}

impl GlmmFit {
    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        let p = self.beta.len();
        DMatrix::from_fn(p, p, |i, j| self.vcov[i][j])
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|k| self.vcov[k][k].max(0.0).sqrt()).collect()
    }

    /// Wald z statistics and 95% intervals.
    pub fn coef_table(&self) -> Vec<CoefRow> {
        self.terms
            .iter()
            .zip(self.beta.iter().zip(self.std_errors()))
            .map(|(t, (&est, se))| {
                let z = est / se;
                CoefRow {
                    term: t.name().to_string(),
                    estimate: est,
                    std_error: se,
                    z,
                    p_value: normal_two_sided_p(z),
                    ci_lower: est - Z_975 * se,
                    ci_upper: est + Z_975 * se,
                }
            })
            .collect()
    }
}

pub fn fit_glmm(table: &ObservationTable, spec: &GlmmSpec) -> Result<GlmmFit> {
    let frame = ModelFrame::from_table(table, spec)?;
    fit_frame(&frame, spec.family, FitOptions::default())
}

/// Starts from `beta = 0`, `sigma_u = 1` and, for the Gaussian family, the
/// marginal SD of the outcome as residual SD.
pub fn fit_frame(frame: &ModelFrame, family: Family, opts: FitOptions) -> Result<GlmmFit> {
    let p = frame.x.ncols();
    let mut obj = MarginalLikelihood::new(frame, family);
    if let Some(s) = opts.fix_sigma {
        obj = obj.with_fixed_sigma(s);
    }
    let mut theta0 = vec![0.0; p];
    if opts.fix_sigma.is_none() {
        theta0.push(1.0);
    }
    if family == Family::GaussianIdentity {
        let sd = crate::descriptive::std_dev(&frame.y);
        theta0.push(if sd.is_finite() && sd > 0.0 { sd.ln() } else { 0.0 });
    }
    let res = optim::maximize(&obj, theta0, opts.optim)?;
    let neg_h = -numeric_hessian(&obj, &res.theta);
    let vcov = beta_covariance(&neg_h, p)?;
    let sigma_u = match opts.fix_sigma {
        Some(s) => s.abs(),
        None => res.theta[p].abs(),
    };
    let residual_sigma = match family {
        Family::GaussianIdentity => Some(res.theta[res.theta.len() - 1].exp()),
        Family::BinomialLogit => None,
    };
    Ok(GlmmFit {
        family,
        terms: frame.terms.clone(),
        beta: res.theta[..p].to_vec(),
        sigma_u,
        residual_sigma,
        vcov: (0..p).map(|i| (0..p).map(|j| vcov[(i, j)]).collect()).collect(),
        loglik: res.value,
        converged: true,
        iterations: res.iterations,
        gradient_max_abs: res.gradient.amax(),
        u_hat: obj.random_effects(&res.theta),
        group_labels: frame.group_labels.clone(),
        n_obs: frame.n_obs(),
    })
}

/// Beta block of the inverse observed information. Falls back to the
/// conditional (beta-only) information when the variance parameter sits on
/// the boundary and the full matrix is singular.
fn beta_covariance(neg_h: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>> {
    if let Some(chol) = neg_h.clone().cholesky() {
        let inv = chol.inverse();
        return Ok(inv.view((0, 0), (p, p)).into_owned());
    }
    let block = neg_h.view((0, 0), (p, p)).into_owned();
    block
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| StatsError::RankDeficient("information matrix is not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(y: Vec<f64>, groups: &[&str]) -> ModelFrame {
        let cov = (0..y.len()).map(|i| ((i % 2) as f64, (i + 1) as f64)).collect();
        ModelFrame::from_parts(&INTERACTION, cov, y, groups).unwrap()
    }

    #[test]
    fn single_participant_is_rejected() {
        let err = ModelFrame::from_parts(&[Term::Intercept], vec![(0.0, 1.0); 3], vec![1.0, 0.0, 1.0], &["a", "a", "a"]);
        assert!(matches!(err, Err(StatsError::InsufficientData(_))));
    }

    #[test]
    fn constant_haptic_is_rank_deficient() {
        let cov = (0..6).map(|i| (1.0, i as f64)).collect();
        let err = ModelFrame::from_parts(&INTERACTION, cov, vec![0.0; 6], &["a", "a", "a", "b", "b", "b"]);
        assert!(matches!(err, Err(StatsError::RankDeficient(_))));
    }

    #[test]
    fn groups_follow_first_appearance() {
        let f = frame(vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0], &["b", "a", "b", "a", "c", "c"]);
        assert_eq!(f.group_labels, vec!["b", "a", "c"]);
        assert_eq!(f.groups[0], vec![0, 2]);
        assert_eq!(f.design_row(1.0, 3.0), vec![1.0, 1.0, 3.0, 3.0]);
    }
}
