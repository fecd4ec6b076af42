//! Reference computations that share no code path with the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub group: Vec<usize>,
    pub labels: Vec<String>,
    pub cov: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn labels_per_row(&self) -> Vec<&str> {
        self.group.iter().map(|&g| self.labels[g].as_str()).collect()
    }

    pub fn rows_of(&self, g: usize) -> Vec<usize> {
        (0..self.y.len()).filter(|&i| self.group[i] == g).collect()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Participants alternate between the two conditions; trial numbers are 1-based.
pub fn simulate_binary(
    seed: u64,
    n_groups: usize,
    n_trials: usize,
    beta: [f64; 4],
    sigma_u: f64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut d = Dataset { x: vec![], y: vec![], group: vec![], labels: vec![], cov: vec![] };
    for g in 0..n_groups {
        let h = (g % 2) as f64;
        let u = sigma_u * normal.sample(&mut rng);
        d.labels.push(format!("p{g:02}"));
        for t in 1..=n_trials {
            let t = t as f64;
            let row = vec![1.0, h, t, h * t];
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + u;
            d.y.push(if rng.random::<f64>() < logistic(eta) { 1.0 } else { 0.0 });
            d.x.push(row);
            d.group.push(g);
            d.cov.push((h, t));
        }
    }
    d
}

pub fn simulate_gaussian(
    seed: u64,
    n_groups: usize,
    n_trials: usize,
    beta: [f64; 4],
    sigma_u: f64,
    sigma_e: f64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut d = Dataset { x: vec![], y: vec![], group: vec![], labels: vec![], cov: vec![] };
    for g in 0..n_groups {
        let h = (g % 2) as f64;
        let u = sigma_u * normal.sample(&mut rng);
        d.labels.push(format!("p{g:02}"));
        for t in 1..=n_trials {
            let t = t as f64;
            let row = vec![1.0, h, t, h * t];
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + u;
            d.y.push(eta + sigma_e * normal.sample(&mut rng));
            d.x.push(row);
            d.group.push(g);
            d.cov.push((h, t));
        }
    }
    d
}

/// Dense Gauss-Jordan solve with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                let pivot_row = a[c].clone();
                for (x, p) in a[r][c..].iter_mut().zip(&pivot_row[c..]) {
                    *x -= f * p;
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Plain logistic regression by iteratively reweighted least squares.
pub fn irls_logistic(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut xtwx = vec![vec![0.0; p]; p];
        let mut xtwz = vec![0.0; p];
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = logistic(eta);
            let w = mu * (1.0 - mu);
            let z = eta + (yi - mu) / w;
            for i in 0..p {
                xtwz[i] += row[i] * w * z;
                for j in 0..p {
                    xtwx[i][j] += row[i] * w * row[j];
                }
            }
        }
        let next = solve(xtwx, xtwz);
        let change = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        if change < 1e-14 {
            break;
        }
    }
    beta
}

/// Ordinary least squares via the normal equations.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    solve(xtx, xty)
}

/// Gauss-Hermite nodes and weights (weight `e^{-x^2}`) by Newton iteration on
/// the orthonormal Hermite recurrence.
pub fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn log_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Exact log marginal likelihood of a random-intercept logistic model by
/// adaptive Gauss-Hermite quadrature with `nodes` points per participant.
pub fn aghq_binomial_loglik(d: &Dataset, beta: &[f64], sigma_u: f64, nodes: usize) -> f64 {
    let (gx, gw) = hermite_rule(nodes);
    let mut total = 0.0;
    for g in 0..d.labels.len() {
        let rows = d.rows_of(g);
        let eta0: Vec<f64> = rows
            .iter()
            .map(|&i| d.x[i].iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect();
        let cond = |u: f64| -> f64 {
            rows.iter()
                .zip(&eta0)
                .map(|(&i, &e)| d.y[i] * (e + u) - log_softplus(e + u))
                .sum()
        };
        if sigma_u == 0.0 {
            total += cond(0.0);
            continue;
        }
        let s2 = sigma_u * sigma_u;
        let log_prior = |u: f64| -0.5 * u * u / s2 - 0.5 * (2.0 * std::f64::consts::PI * s2).ln();
        // Mode by bisection on the strictly decreasing derivative.
        let deriv = |u: f64| -> f64 {
            rows.iter().zip(&eta0).map(|(&i, &e)| d.y[i] - logistic(e + u)).sum::<f64>() - u / s2
        };
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mode = 0.5 * (lo + hi);
        let curv: f64 = rows
            .iter()
            .zip(&eta0)
            .map(|(_, &e)| {
                let p = logistic(e + mode);
                p * (1.0 - p)
            })
            .sum::<f64>()
            + 1.0 / s2;
        let scale = (2.0 / curv).sqrt();
        let terms: Vec<f64> = gx
            .iter()
            .zip(&gw)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| {
                let u = mode + scale * x;
                w.ln() + x * x + cond(u) + log_prior(u)
            })
            .collect();
        let mx = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        total += mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln() + scale.ln();
    }
    total
}

/// Exact Gaussian random-intercept log-likelihood via dense Cholesky of each
/// participant's marginal covariance.
pub fn gaussian_exact_loglik(d: &Dataset, beta: &[f64], sigma_u: f64, sigma_e: f64) -> f64 {
    let mut total = 0.0;
    for g in 0..d.labels.len() {
        let rows = d.rows_of(g);
        let n = rows.len();
        let r: Vec<f64> = rows
            .iter()
            .map(|&i| d.y[i] - d.x[i].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = sigma_u * sigma_u + if i == j { sigma_e * sigma_e } else { 0.0 };
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                l[i][j] = if i == j { (v - s).sqrt() } else { (v - s) / l[j][j] };
            }
        }
        let mut z = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
            z[i] = (r[i] - s) / l[i][i];
        }
        let logdet: f64 = (0..n).map(|i| 2.0 * l[i][i].ln()).sum();
        let quad: f64 = z.iter().map(|v| v * v).sum();
        total += -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
    }
    total
}

/// Student-t CDF by composite Simpson integration of the density.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let dens = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let a = t.abs();
    let n = 200_000;
    let h = a / n as f64;
    let mut s = dens(0.0) + dens(a);
    for k in 1..n {
        s += dens(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}
