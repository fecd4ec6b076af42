//! Two-sample and paired t-tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::descriptive::{mean, variance};
use crate::error::{Result, StatsError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    #[default]
    Welch,
    Pooled,
    /// Pairs observations by position; both samples must have equal length.
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub kind: TTestKind,
    /// `mean(a) - mean(b)`.
    pub mean_diff: f64,
    pub std_error: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

pub fn t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "t-test needs two observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a), variance(b));
    let (diff, se, df) = match kind {
        TTestKind::Welch => {
            let (sa, sb) = (va / na, vb / nb);
            let se2 = sa + sb;
            let df = if se2 > 0.0 {
                se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0))
            } else {
                na + nb - 2.0
            };
            (mean(a) - mean(b), se2.sqrt(), df)
        }
        TTestKind::Pooled => {
            let df = na + nb - 2.0;
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (mean(a) - mean(b), (sp2 * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
        TTestKind::Paired => {
            if a.len() != b.len() {
                return Err(StatsError::InsufficientData(format!(
                    "paired t-test needs equal sample sizes, got {} and {}",
                    a.len(),
                    b.len()
                )));
            }
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            (mean(&d), (variance(&d) / na).sqrt(), na - 1.0)
        }
    };
    let t = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let dist = StudentsT::new(0.0, 1.0, df).expect("degrees of freedom are positive");
    let p = if t.is_infinite() { 0.0 } else { (2.0 * dist.cdf(-t.abs())).min(1.0) };
    let q = dist.inverse_cdf(0.975);
    Ok(TTest {
        kind,
        mean_diff: diff,
        std_error: se,
        t,
        df,
        p_value: p,
        ci_lower: diff - q * se,
        ci_upper: diff + q * se,
    })
}
