mod common;

use common::*;
use purrfect_stats::glmm::MarginalLikelihood;
use purrfect_stats::{fit_frame, Family, FitOptions, ModelFrame, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TERMS: [Term; 4] = [Term::Intercept, Term::Haptic, Term::Trial, Term::HapticTrial];

fn frame_of(d: &Dataset) -> ModelFrame {
    ModelFrame::from_parts(&TERMS, d.cov.clone(), d.y.clone(), &d.labels_per_row()).unwrap()
}

#[test]
fn hermite_oracle_rule_integrates_polynomials() {
    let (x, w) = hermite_rule(129);
    let pi = std::f64::consts::PI;
    let m0: f64 = w.iter().sum();
    let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    assert!((m0 - pi.sqrt()).abs() < 1e-12);
    assert!((m2 - pi.sqrt() / 2.0).abs() < 1e-12);
}

#[test]
fn binomial_objective_is_one_node_adaptive_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for rep in 0..10 {
        let d = simulate_binary(rep, 4, 15, [-0.7, 0.9, 0.03, -0.02], 0.8);
        let frame = frame_of(&d);
        let obj = MarginalLikelihood::new(&frame, Family::BinomialLogit);
        let beta: Vec<f64> = (0..4).map(|k| rng.random_range(-0.5..0.5) * if k >= 2 { 0.1 } else { 1.0 }).collect();
        let sigma = rng.random_range(0.05..2.0);
        let mut theta = beta.clone();
        theta.push(sigma);
        let laplace = obj.value(&theta);
        let one_node = aghq_binomial_loglik(&d, &beta, sigma, 1);
        assert!((laplace - one_node).abs() < 1e-9, "rep {rep}: {laplace} vs {one_node}");
    }
}

#[test]
fn laplace_gap_shrinks_with_sigma() {
    let d = simulate_binary(3, 5, 20, [-0.7, 0.9, 0.0, 0.0], 0.5);
    let frame = frame_of(&d);
    let obj = MarginalLikelihood::new(&frame, Family::BinomialLogit);
    let beta = [-0.6, 0.8, 0.0, 0.0];
    let gap = |s: f64| {
        let theta = [beta[0], beta[1], beta[2], beta[3], s];
        (obj.value(&theta) - aghq_binomial_loglik(&d, &beta, s, 129)).abs()
    };
    let (g1, g2, g3) = (gap(0.05), gap(0.3), gap(1.0));
    assert!(g1 < 1e-4, "{g1}");
    assert!(g1 < g2 && g2 < g3, "{g1} {g2} {g3}");
}

#[test]
fn gaussian_objective_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for rep in 0..10 {
        let d = simulate_gaussian(rep, 4, 12, [6.9, -1.7, -0.01, 0.008], 1.0, 2.5);
        let frame = frame_of(&d);
        let obj = MarginalLikelihood::new(&frame, Family::GaussianIdentity);
        let beta: Vec<f64> = vec![rng.random_range(5.0..8.0), rng.random_range(-2.0..0.0), 0.01, -0.02];
        let (su, se) = (rng.random_range(0.0..2.0), rng.random_range(0.5..4.0));
        let mut theta = beta.clone();
        theta.extend([su, f64::ln(se)]);
        let ours = obj.value(&theta);
        let exact = gaussian_exact_loglik(&d, &beta, su, se);
        assert!((ours - exact).abs() < 1e-9 * exact.abs(), "rep {rep}: {ours} vs {exact}");
    }
}

fn check_gradient(obj: &MarginalLikelihood<'_>, theta: &[f64]) {
    let (_, grad) = obj.value_grad(theta);
    for k in 0..theta.len() {
        let h = 1e-6 * theta[k].abs().max(1e-2);
        let mut plus = theta.to_vec();
        plus[k] += h;
        let mut minus = theta.to_vec();
        minus[k] -= h;
        let fd = (obj.value(&plus) - obj.value(&minus)) / (2.0 * h);
        let scale = fd.abs().max(grad[k].abs()).max(1e-3);
        assert!(
            (fd - grad[k]).abs() / scale < 1e-4,
            "component {k}: analytic {} vs fd {fd} at {theta:?}",
            grad[k]
        );
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for rep in 0..15 {
        let d = simulate_binary(50 + rep, 5, 20, [-0.7, 0.9, 0.02, 0.01], 0.6);
        let frame = frame_of(&d);
        let obj = MarginalLikelihood::new(&frame, Family::BinomialLogit);
        let theta = vec![
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(0.1..2.5),
        ];
        check_gradient(&obj, &theta);

        let g = simulate_gaussian(70 + rep, 5, 20, [6.0, -1.5, -0.01, 0.01], 0.8, 2.0);
        let gframe = frame_of(&g);
        let gobj = MarginalLikelihood::new(&gframe, Family::GaussianIdentity);
        let gtheta = vec![
            rng.random_range(4.0..8.0),
            rng.random_range(-2.0..1.0),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(0.1..2.0),
            rng.random_range(0.0..1.5),
        ];
        check_gradient(&gobj, &gtheta);
    }
}

#[test]
fn zero_sigma_reproduces_logistic_regression() {
    for rep in 0..10 {
        let d = simulate_binary(200 + rep, 6, 40, [-0.7, 0.9, 0.01, 0.02], 0.4);
        let frame = frame_of(&d);
        let fit = fit_frame(&frame, Family::BinomialLogit, FitOptions { fix_sigma: Some(0.0), ..Default::default() })
            .unwrap();
        let oracle = irls_logistic(&d.x, &d.y);
        for (a, b) in fit.beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "rep {rep}: {:?} vs {oracle:?}", fit.beta);
        }
    }
}

#[test]
fn zero_sigma_reproduces_least_squares() {
    for rep in 0..5 {
        let d = simulate_gaussian(300 + rep, 6, 30, [6.9, -1.7, -0.01, 0.008], 0.7, 2.0);
        let frame = frame_of(&d);
        let fit = fit_frame(&frame, Family::GaussianIdentity, FitOptions { fix_sigma: Some(0.0), ..Default::default() })
            .unwrap();
        let oracle = ols(&d.x, &d.y);
        for (a, b) in fit.beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {oracle:?}", fit.beta);
        }
        let n = d.y.len() as f64;
        let rss: f64 = d.x.iter().zip(&d.y).map(|(x, y)| {
            let f: f64 = x.iter().zip(&oracle).map(|(a, b)| a * b).sum();
            (y - f).powi(2)
        }).sum();
        assert!((fit.residual_sigma.unwrap() - (rss / n).sqrt()).abs() < 1e-6);
    }
}

#[test]
fn optimum_improves_on_starting_point() {
    for rep in 0..8 {
        let d = simulate_binary(400 + rep, 5, 20, [-0.7, 0.9, 0.02, 0.01], 0.5);
        let frame = frame_of(&d);
        let fit = fit_frame(&frame, Family::BinomialLogit, FitOptions::default()).unwrap();
        let start = MarginalLikelihood::new(&frame, Family::BinomialLogit).value(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(fit.loglik >= start);
        assert!(fit.converged && fit.sigma_u >= 0.0);
    }
}

#[test]
fn balanced_symmetric_data_gives_null_model() {
    // Participants come in complementary pairs sharing a condition, so every
    // score equation is exactly zero at beta = 0, u = 0.
    let mut cov = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    for p in 0..20usize {
        let h = ((p / 2) % 2) as f64;
        for t in 1..=500usize {
            cov.push((h, t as f64));
            y.push(((p + t) % 2) as f64);
            labels.push(format!("p{p}"));
        }
    }
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let frame = ModelFrame::from_parts(&TERMS, cov, y, &refs).unwrap();
    let fit = fit_frame(&frame, Family::BinomialLogit, FitOptions::default()).unwrap();
    assert_eq!(fit.n_obs, 10_000);
    for b in &fit.beta {
        assert!(b.abs() < 0.05, "{:?}", fit.beta);
    }
    assert!(fit.sigma_u < 0.05, "{}", fit.sigma_u);
}

#[test]
fn gaussian_fit_matches_exact_likelihood() {
    let d = simulate_gaussian(17, 8, 40, [6.9, -1.7, -0.008, 0.008], 0.9, 2.5);
    let frame = frame_of(&d);
    let fit = fit_frame(&frame, Family::GaussianIdentity, FitOptions::default()).unwrap();
    let exact = gaussian_exact_loglik(&d, &fit.beta, fit.sigma_u, fit.residual_sigma.unwrap());
    assert!((fit.loglik - exact).abs() < 1e-8);
    let cov = fit.vcov_matrix();
    assert!((&cov - cov.transpose()).amax() < 1e-12);
    assert!(cov.clone().symmetric_eigen().eigenvalues.min() > 0.0);
}
