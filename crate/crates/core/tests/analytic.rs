mod common;

use approx::assert_relative_eq;
use common::{integrate_split, normal_pdf};
use heterobayes::analytic::*;
use heterobayes::distributions::{normal_rng, seeded_rng};
use proptest::prelude::*;
use rand::Rng;

/// ln p(dy | M1) − ln p(dy | M0), integrating the latent true change
/// `d_x = μΔ + σΔ z` numerically.
fn quadrature_log_bf(dy: f64, mu_delta: f64, sigma_delta: f64, sigma: f64) -> f64 {
    let s = std::f64::consts::SQRT_2 * sigma;
    let peak = (dy - mu_delta) / sigma_delta;
    let f = |z: f64| normal_pdf(z, 0.0, 1.0) * normal_pdf(dy, mu_delta + sigma_delta * z, s);
    let m1 = integrate_split(&f, -40.0, 40.0, &[peak - 1e-3, peak, peak + 1e-3, 0.0], 1e-12);
    m1.ln() - normal_pdf(dy, 0.0, s).ln()
}

#[test]
fn log_bf_matches_quadrature_on_random_parameters() {
    let mut rng = seeded_rng(11);
    for _ in 0..50 {
        let sigma = rng.random_range(0.02..0.2);
        let eta = rng.random_range(0.01..0.99);
        let xi = rng.random_range(0.0..5.0);
        let mu_delta = xi * std::f64::consts::SQRT_2 * sigma;
        let effect = EffectParams::from_eta(mu_delta, eta, sigma).unwrap();
        let dy = mu_delta + rng.random_range(-4.0..4.0) * (effect.sigma_delta.powi(2) + 2.0 * sigma * sigma).sqrt();
        let exact = log_bf10(dy, &effect).unwrap();
        let oracle = quadrature_log_bf(dy, mu_delta, effect.sigma_delta, sigma);
        assert!((exact - oracle).abs() < 1e-6, "eta {eta} xi {xi}: {exact} vs {oracle}");
    }
}

#[test]
fn log_bf_reduced_forms() {
    let e = EffectParams::from_eta(0.0, 0.9, 0.05).unwrap();
    assert_relative_eq!(log_bf10(0.0, &e).unwrap(), 0.5 * 0.1f64.ln(), epsilon = 1e-12);
    let e = EffectParams::from_eta(0.3, 0.7, 0.05).unwrap();
    let xi = 0.3 / (std::f64::consts::SQRT_2 * 0.05);
    assert_relative_eq!(log_bf10(0.3, &e).unwrap(), 0.5 * (0.3f64.ln() + xi * xi), epsilon = 1e-12);
    assert!(EffectParams::from_eta(0.0, 1.0, 0.05).is_err());
}

/// Mean and sd of a repeat measurement given `y0`, marginalizing the true
/// value `x0 ~ N(μ0, σ0)` numerically.
fn quadrature_predictive(y0: f64, mu0: f64, sigma0: f64, sigma: f64) -> (f64, f64) {
    let lo = mu0.min(y0) - 12.0 * sigma0.max(sigma);
    let hi = mu0.max(y0) + 12.0 * sigma0.max(sigma);
    let w = |x: f64| normal_pdf(y0, x, sigma) * normal_pdf(x, mu0, sigma0);
    let breaks = [y0, mu0];
    let z = integrate_split(&w, lo, hi, &breaks, 1e-12);
    let m = integrate_split(&|x| x * w(x), lo, hi, &breaks, 1e-12) / z;
    let v = integrate_split(&|x| (x - m) * (x - m) * w(x), lo, hi, &breaks, 1e-12) / z;
    (m, (v + sigma * sigma).sqrt())
}

#[test]
fn conditional_predictive_matches_quadrature() {
    let mut rng = seeded_rng(5);
    for _ in 0..50 {
        let sigma = rng.random_range(0.02..0.3);
        let sigma0 = rng.random_range(0.01..1.0);
        let mu0 = rng.random_range(0.5..2.0);
        let y0 = mu0 + rng.random_range(-3.0..3.0) * sigma0;
        let (m, s) = conditional_predictive_m0(y0, mu0, sigma0, sigma).unwrap();
        let (qm, qs) = quadrature_predictive(y0, mu0, sigma0, sigma);
        assert!((m - qm).abs() < 1e-6 && (s - qs).abs() < 1e-6, "{m},{s} vs {qm},{qs}");
    }
}

#[test]
fn conditional_predictive_worked_example_and_limit() {
    let (m, s) = conditional_predictive_m0(1.2, 1.0, 0.2, 0.05).unwrap();
    let (qm, qs) = quadrature_predictive(1.2, 1.0, 0.2, 0.05);
    assert_relative_eq!(m, 1.188_235_3, epsilon = 1e-7);
    assert_relative_eq!(m, qm, epsilon = 1e-9);
    assert_relative_eq!(s, qs, epsilon = 1e-9);
    let (m, s) = conditional_predictive_m0(1.2, 1.0, f64::INFINITY, 0.05).unwrap();
    assert_eq!((m, s), (1.2, std::f64::consts::SQRT_2 * 0.05));
}

#[test]
fn repeatability_examples() {
    assert_eq!(sigma_lsq(&[(1.0, 1.0), (2.0, 2.0)]).unwrap(), 0.0);
    assert_relative_eq!(sigma_lsq(&[(0.0, 2.0)]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    assert_relative_eq!(sigma_lsq(&[(0.0, 1.0), (1.0, 0.0), (2.0, 2.0)]).unwrap(), (2.0f64 / 6.0).sqrt(), epsilon = 1e-15);
    assert!(sigma_lsq(&[]).is_err());
    assert_eq!(icc(0.3, 0.3).unwrap(), 0.5);
    assert_eq!(icc(0.3, 0.0).unwrap(), 1.0);
    assert_relative_eq!(icc(0.2, 0.05).unwrap(), 0.941_176_5, epsilon = 1e-7);
    assert_relative_eq!(rc(0.05), 0.138_592_9, epsilon = 1e-7);
    assert!(cov(0.05, 0.0).is_err());
}

#[test]
fn pvalue_examples() {
    let pairs = [(1.0, 1.1), (0.9, 0.85), (1.2, 1.25)];
    assert_relative_eq!(pvalue_change(0.0, &pairs).unwrap(), 1.0, epsilon = 1e-12);
    assert!(pvalue_change(0.3, &[(1.0, 1.0), (2.0, 2.0)]).is_err());

    // A million pairs with σ̂ = 1 exactly: the t reference is effectively normal.
    let n = 1_000_000;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| if i % 2 == 0 { (0.0, 2f64.sqrt()) } else { (2f64.sqrt(), 0.0) })
        .collect();
    assert_relative_eq!(sigma_lsq(&pairs).unwrap(), 1.0, epsilon = 1e-12);
    let p = pvalue_change(1.96 * 2f64.sqrt(), &pairs).unwrap();
    assert!((p - 0.05).abs() < 1e-3, "{p}");
}

#[test]
fn expected_log_bf_examples() {
    for h in [Hypothesis::M0, Hypothesis::M1] {
        assert_eq!(expected_log_bf(0.0, 0.0, h).unwrap(), 0.0);
    }
    assert_relative_eq!(expected_log_bf(0.9, 1.0, Hypothesis::M1).unwrap(), 0.5 * (0.1f64.ln() + 9.0 + 1.0), epsilon = 1e-12);
    assert!((expected_log_bf(0.9, 1.0, Hypothesis::M1).unwrap() - 3.848_707).abs() < 1e-6);
    assert_relative_eq!(expected_log_bf(0.9, 1.0, Hypothesis::M0).unwrap(), -0.751_292_5, epsilon = 1e-7);
    assert!(expected_log_bf(1.0, 1.0, Hypothesis::M1).is_err());
}

#[test]
fn expected_log_bf_matches_monte_carlo() {
    let sigma = 0.05;
    let mut rng = seeded_rng(99);
    for &eta in &[0.3, 0.9] {
        for &xi in &[0.0, 1.5] {
            let mu_delta = xi * std::f64::consts::SQRT_2 * sigma;
            let e = EffectParams::from_eta(mu_delta, eta, sigma).unwrap();
            for (h, sd) in [(Hypothesis::M0, 0.0), (Hypothesis::M1, e.sigma_delta)] {
                let n = 40_000;
                let centre = if h == Hypothesis::M1 { mu_delta } else { 0.0 };
                let draws: Vec<f64> = (0..n)
                    .map(|_| {
                        let dx = normal_rng(&mut rng, centre, sd).unwrap();
                        let dy = normal_rng(&mut rng, dx, std::f64::consts::SQRT_2 * sigma).unwrap();
                        log_bf10(dy, &e).unwrap()
                    })
                    .collect();
                let se = (common::variance(&draws) / n as f64).sqrt();
                let target = expected_log_bf(eta, xi, h).unwrap();
                assert!((common::mean(&draws) - target).abs() < 4.0 * se, "{eta} {xi} {h:?}");
            }
        }
    }
}

#[test]
fn evidence_bands() {
    let label = |bf: f64| interpret_bf(bf).unwrap().label();
    assert_eq!(label(50.0), "Very strong evidence for M1");
    assert_eq!(label(30.0), "Strong evidence for M1");
    assert_eq!(label(10.0), "Strong evidence for M1");
    assert_eq!(label(3.0), "Moderate evidence for M1");
    assert_eq!(label(1.0), "Anecdotal evidence for M1");
    assert_eq!(label(0.5), "Anecdotal evidence for M0");
    assert_eq!(label(1.0 / 3.0), "Moderate evidence for M0");
    assert_eq!(label(0.1), "Moderate evidence for M0");
    assert_eq!(label(0.05), "Strong evidence for M0");
    assert!(interpret_bf(0.0).is_err());
}

proptest! {
    #[test]
    fn expected_log_bf_is_monotone_in_effect_size(eta in 0.0f64..0.99, xi in 0.0f64..5.0, dxi in 0.0f64..1.0) {
        let up = xi + dxi;
        prop_assert!(expected_log_bf(eta, up, Hypothesis::M1).unwrap() >= expected_log_bf(eta, xi, Hypothesis::M1).unwrap());
        prop_assert!(expected_log_bf(eta, up, Hypothesis::M0).unwrap() <= expected_log_bf(eta, xi, Hypothesis::M0).unwrap());
    }

    #[test]
    fn icc_in_unit_interval_and_rc_linear(s0 in 1e-3f64..10.0, s in 1e-3f64..10.0, k in 0.1f64..10.0) {
        let r = icc(s0, s).unwrap();
        prop_assert!(r > 0.0 && r < 1.0);
        prop_assert!((rc(k * s) - k * rc(s)).abs() <= 1e-12 * rc(k * s));
    }
}
