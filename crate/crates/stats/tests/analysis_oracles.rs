mod common;

use common::*;
use purrfect_stats::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

#[test]
fn welch_matches_closed_form() {
    let a = [19.8, 20.4, 19.6, 17.8, 18.5, 18.9, 18.3, 18.9, 19.5, 22.0];
    let b = [
        28.2, 26.6, 20.1, 23.3, 25.2, 22.1, 17.7, 27.6, 20.6, 13.7, 23.2, 17.5, 20.6, 18.0, 23.9, 21.6,
        24.3, 20.4, 23.9, 13.3,
    ];
    let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let v = |x: &[f64]| {
        let mu = m(x);
        x.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (v(&a) / na, v(&b) / nb);
    let t = (m(&a) - m(&b)) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let p = 2.0 * t_cdf(-t.abs(), df);

    let r = t_test(&a, &b, TTestKind::Welch).unwrap();
    assert!((r.t - t).abs() < 1e-6, "{} vs {t}", r.t);
    assert!((r.df - df).abs() < 1e-6);
    assert!((r.p_value - p).abs() < 1e-6, "{} vs {p}", r.p_value);
}

fn rt_table(times: &[f64]) -> ObservationTable {
    ObservationTable {
        rows: times
            .iter()
            .enumerate()
            .map(|(i, &t)| Observation {
                participant_id: format!("p{}", i % 6),
                haptic: ((i % 6) / 3) as u8,
                trial_number: (i / 6) as u32 + 1,
                correct: (i % 3 == 0) as u8,
                response_time_s: t,
                phase: Phase::Training,
                interval_degree: 1 + (i % 8) as u8,
                response_degree: 1 + (i % 8) as u8,
            })
            .collect(),
    }
}

#[test]
fn outlier_is_removed_at_two_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ln = LogNormal::new(1.7, 0.35).unwrap();
    let mut times: Vec<f64> = (0..200).map(|_| ln.sample(&mut rng)).collect();
    times.push(60.0);
    let floored: Vec<f64> = times.iter().copied().filter(|t| *t >= 1.2).collect();
    let n = floored.len() as f64;
    let mean = floored.iter().sum::<f64>() / n;
    let sd = (floored.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let threshold = mean + 2.0 * sd;
    let expected_kept = floored.iter().filter(|t| **t <= threshold).count();

    let (out, rep) = filter_response_times(&rt_table(&times));
    assert!((rep.threshold_s.unwrap() - threshold).abs() < 1e-12);
    assert_eq!(out.len(), expected_kept);
    assert!(out.rows.iter().all(|r| r.response_time_s < 60.0));
    assert_eq!(rep.n_kept + rep.n_above_threshold + rep.n_below_floor, rep.n_input);

    // Second pass has nothing left under the floor.
    let (_, again) = filter_response_times(&out);
    assert_eq!(again.n_below_floor, 0);
}

fn fitted(seed: u64) -> (GlmmFit, ModelFrame, Dataset) {
    let d = simulate_binary(seed, 8, 60, [-0.7, 0.9, 0.003, 0.006], 0.4);
    let frame = ModelFrame::from_parts(
        &[Term::Intercept, Term::Haptic, Term::Trial, Term::HapticTrial],
        d.cov.clone(),
        d.y.clone(),
        &d.labels_per_row(),
    )
    .unwrap();
    let fit = fit_frame(&frame, Family::BinomialLogit, FitOptions::default()).unwrap();
    (fit, frame, d)
}

#[test]
fn predictions_ignore_row_order() {
    let (fit, frame, d) = fitted(21);
    let mut order: Vec<usize> = (0..d.y.len()).collect();
    order.reverse();
    order.rotate_left(37);
    let labels = d.labels_per_row();
    let shuffled = ModelFrame::from_parts(
        &frame.terms,
        order.iter().map(|&i| d.cov[i]).collect(),
        order.iter().map(|&i| d.y[i]).collect(),
        &order.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
    )
    .unwrap();
    for mode in [MarginalMode::Conditional, MarginalMode::Integrated] {
        let a = marginal_predictions(&fit, &frame, mode);
        let b = marginal_predictions(&fit, &shuffled, mode);
        for g in 0..2 {
            assert!((a.predictions[g].estimate - b.predictions[g].estimate).abs() < 1e-12);
            assert!((a.slopes[g].estimate - b.slopes[g].estimate).abs() < 1e-12);
        }
        assert!((a.contrast.std_error - b.contrast.std_error).abs() < 1e-12);
    }
}

#[test]
fn delta_method_matches_numeric_jacobian() {
    let (fit, frame, _) = fitted(22);
    let m = marginal_predictions(&fit, &frame, MarginalMode::Conditional);
    // Numeric gradient of the contrast with respect to beta.
    let contrast_at = |beta: &[f64]| {
        let mut f = fit.clone();
        f.beta = beta.to_vec();
        marginal_predictions(&f, &frame, MarginalMode::Conditional).contrast.estimate
    };
    let p = fit.beta.len();
    let mut grad = vec![0.0; p];
    for k in 0..p {
        let h = 1e-6 * fit.beta[k].abs().max(1e-3);
        let mut up = fit.beta.clone();
        up[k] += h;
        let mut dn = fit.beta.clone();
        dn[k] -= h;
        grad[k] = (contrast_at(&up) - contrast_at(&dn)) / (2.0 * h);
    }
    let var: f64 = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| grad[i] * fit.vcov[i][j] * grad[j]).sum();
    assert!((var.sqrt() - m.contrast.std_error).abs() / m.contrast.std_error < 1e-5);
}
