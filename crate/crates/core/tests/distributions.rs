mod common;

use approx::assert_relative_eq;
use common::{fd_gradient, integrate, mean, variance};
use heterobayes::distributions::*;
use heterobayes::special::{ln_factorial, ln_gamma};
use proptest::prelude::*;
use rand::Rng;

/// Every composition of `n` into `k` non-negative parts.
fn compositions(n: u64, k: usize) -> Vec<Vec<u64>> {
    if k == 1 {
        return vec![vec![n]];
    }
    (0..=n)
        .flat_map(|first| {
            compositions(n - first, k - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// `∫_0^∞ f` through the map `x = t / (1 − t)`.
fn integrate_half_line<F: Fn(f64) -> f64>(f: F) -> f64 {
    let g = |t: f64| {
        let x = t / (1.0 - t);
        f(x) / ((1.0 - t) * (1.0 - t))
    };
    integrate(&g, 0.0, 1.0 - 1e-12, 1e-11)
}

#[test]
fn ln_gamma_reference_values() {
    let reference = [
        (1e-6, 13.81550998074943),
        (0.1, 2.2527126517342055),
        (0.5, 0.5723649429247004),
        (1.5, -0.12078223763524543),
        (3.7, 1.4280723266653883),
        (10.0, 12.801827480081467),
        (123.4, 469.3360974421906),
        (1e5, 1051287.7089736566),
        (1e8, 1742068066.1038349),
    ];
    for (x, v) in reference {
        assert_relative_eq!(ln_gamma(x), v, max_relative = 1e-12);
    }
}

#[test]
fn normal_gradient_matches_finite_differences() {
    let t = normal_logpdf_grad(1.3, 1.0, 0.05).unwrap();
    let fd = fd_gradient(|p| normal_logpdf(1.3, p[0], p[1]).unwrap(), &[1.0, 0.05], 1e-6);
    common::assert_close_rel(&[t.d_mu, t.d_sigma], &fd, 1e-6, 1e-8, "normal");

    let mut rng = seeded_rng(1);
    for _ in 0..100 {
        let (x, mu, sigma) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.2..3.0));
        let t = normal_logpdf_grad(x, mu, sigma).unwrap();
        let fd = fd_gradient(|p| normal_logpdf(p[0], p[1], p[2]).unwrap(), &[x, mu, sigma], 1e-6);
        common::assert_close_rel(&[t.d_x, t.d_mu, t.d_sigma], &fd, 1e-5, 1e-4, "normal");
    }
}

#[test]
fn half_cauchy_gradient_and_normalization() {
    let mut rng = seeded_rng(2);
    for _ in 0..100 {
        let (x, g) = (rng.random_range(0.01..10.0), rng.random_range(0.1..10.0));
        let (_, d) = half_cauchy_logpdf_grad(x, g).unwrap();
        let fd = fd_gradient(|p| half_cauchy_logpdf(p[0], g).unwrap(), &[x], 1e-6);
        common::assert_close_rel(&[d], &fd, 1e-5, 1e-4, "half-Cauchy");
    }
    for g in [0.5, 1.0, 5.0] {
        let total = integrate_half_line(|x| half_cauchy_logpdf(x, g).unwrap().exp());
        assert!((total - 1.0).abs() < 1e-8, "gamma {g}: {total}");
    }
    assert!(half_cauchy_logpdf(-0.1, 1.0).is_err());
}

#[test]
fn student_t_integrates_to_one() {
    for nu in [1.0, 5.0, 10.0] {
        let half = integrate_half_line(|t| student_t_logpdf(t, nu).unwrap().exp());
        assert!((2.0 * half - 1.0).abs() < 1e-8, "nu {nu}: {}", 2.0 * half);
    }
    assert!(student_t_logpdf(0.0, 0.0).is_err());
}

#[test]
fn dirichlet_two_components_is_beta() {
    let mu = SimplexVec::new(vec![0.25, 0.75]).unwrap();
    // Beta(1, 3) has density 3(1 − x)².
    let v = dirichlet_logpdf(&[0.3, 0.7], &mu, 4.0).unwrap();
    assert_relative_eq!(v, (3.0 * 0.49f64).ln(), epsilon = 1e-12);
    assert!(dirichlet_logpdf(&[0.3, 0.7], &SimplexVec::uniform(3).unwrap(), 4.0).is_err());
}

#[test]
fn dirichlet_integrates_to_one_over_simplex() {
    // Uniform points on the 2-simplex have density 2.
    let mu = SimplexVec::new(vec![0.1, 0.8, 0.1]).unwrap();
    let mut rng = seeded_rng(3);
    let n = 200_000;
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            dirichlet_logpdf(&[a, b - a, 1.0 - b], &mu, 11.54).unwrap().exp() / 2.0
        })
        .collect();
    let m = mean(&vals);
    let se = (variance(&vals) / n as f64).sqrt();
    assert!((m - 1.0).abs() < 1e-2 && (m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn multinomial_sums_to_one() {
    let x = SimplexVec::new(vec![0.2, 0.5, 0.3]).unwrap();
    let total: f64 = compositions(4, 3)
        .into_iter()
        .map(|y| multinomial_logpmf(&CountVec::new(y).unwrap(), &x, 4).unwrap().exp())
        .sum();
    assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    let y = CountVec::new(vec![2, 1, 1]).unwrap();
    assert!(multinomial_logpmf(&y, &x, 5).is_err());
}

#[test]
fn dirichlet_multinomial_sums_to_one() {
    let mu = SimplexVec::new(vec![0.1, 0.8, 0.1]).unwrap();
    for n in 1..=6 {
        for prec in [0.3, 11.54, 1e4] {
            let total: f64 = compositions(n, 3)
                .into_iter()
                .filter(|y| y.iter().sum::<u64>() > 0)
                .map(|y| dirichlet_multinomial_logpmf(&CountVec::new(y).unwrap(), &mu, prec, true).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "n {n} prec {prec}: {total}");
        }
    }
    let half = SimplexVec::new(vec![0.5, 0.5]).unwrap();
    for y in [vec![1, 0], vec![0, 1]] {
        let p = dirichlet_multinomial_logpmf(&CountVec::new(y).unwrap(), &half, 2.0, true).unwrap();
        assert_relative_eq!(p.exp(), 0.5, epsilon = 1e-12);
    }
}

#[test]
fn dirichlet_multinomial_unnormalized_matches_gamma_form() {
    let y = [2u64, 2, 1];
    let mu = [0.1, 0.8, 0.1];
    let prec = 11.54;
    let direct = ln_gamma(prec) - ln_gamma(5.0 + prec)
        + y.iter().zip(&mu).map(|(&c, &m)| ln_gamma(c as f64 + m * prec) - ln_gamma(m * prec)).sum::<f64>();
    let cv = CountVec::new(y.to_vec()).unwrap();
    let sv = SimplexVec::new(mu.to_vec()).unwrap();
    let un = dirichlet_multinomial_logpmf(&cv, &sv, prec, false).unwrap();
    let norm = dirichlet_multinomial_logpmf(&cv, &sv, prec, true).unwrap();
    assert_relative_eq!(un, direct, epsilon = 1e-12);
    assert_relative_eq!(norm - un, ln_factorial(5) - 2.0 * ln_factorial(2), epsilon = 1e-12);
}

#[test]
fn dirichlet_multinomial_gradient_matches_finite_differences() {
    let mut rng = seeded_rng(4);
    for _ in 0..100 {
        let alpha: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..50.0)).collect();
        let y: Vec<u64> = (0..3).map(|_| rng.random_range(0..200)).collect();
        let mut grad = vec![0.0; 3];
        dm_lpmf_grad(&y, &alpha, &mut grad);
        let h: Vec<f64> = alpha.iter().map(|a| 1e-6 * a.max(1.0)).collect();
        let fd: Vec<f64> = (0..3)
            .map(|i| {
                let mut up = alpha.clone();
                let mut dn = alpha.clone();
                up[i] += h[i];
                dn[i] -= h[i];
                (dm_lpmf(&y, &up) - dm_lpmf(&y, &dn)) / (2.0 * h[i])
            })
            .collect();
        common::assert_close_rel(&grad, &fd, 1e-5, 1e-3, "dirichlet-multinomial");
    }
}

#[test]
fn dirichlet_multinomial_stays_accurate_at_huge_concentration() {
    // As the concentration grows the mass tends to the multinomial at mu.
    let y = [3u64, 40, 7];
    let mu = [0.1, 0.8, 0.1];
    let limit: f64 = y.iter().zip(&mu).map(|(&c, &m)| c as f64 * f64::ln(m)).sum();
    for prec in [1e10, 1e20, 1e28] {
        let alpha: Vec<f64> = mu.iter().map(|m| m * prec).collect();
        assert!((dm_lpmf(&y, &alpha) - limit).abs() < 1e-6, "prec {prec}");
    }
}

#[test]
fn rng_moments() {
    let mut rng = seeded_rng(5);
    let n = 100_000;
    let z: Vec<f64> = (0..n).map(|_| normal_rng(&mut rng, 0.0, 1.0).unwrap()).collect();
    assert!(mean(&z).abs() < 0.02);
    assert!((variance(&z) - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());

    let u: Vec<f64> = (0..n).map(|_| uniform_rng(&mut rng, 2.0, 4.0).unwrap()).collect();
    assert!((mean(&u) - 3.0).abs() < 4.0 * (1.0 / (3.0 * n as f64)).sqrt());

    let (m, s) = (1.0, 0.3);
    let l: Vec<f64> = (0..n).map(|_| lognormal_rng(&mut rng, m, s).unwrap()).collect();
    let expect = (m + 0.5 * s * s).exp();
    assert!((mean(&l) - expect).abs() < 4.0 * (variance(&l) / n as f64).sqrt());

    let mut hc: Vec<f64> = (0..n).map(|_| half_cauchy_rng(&mut rng, 2.0).unwrap()).collect();
    hc.sort_by(f64::total_cmp);
    // Median of a half-Cauchy is gamma; sd of the sample median ≈ π γ / (2 √n).
    assert!((hc[n / 2] - 2.0).abs() < 4.0 * std::f64::consts::PI * 2.0 / (2.0 * (n as f64).sqrt()));
}

#[test]
fn dirichlet_and_multinomial_draw_moments() {
    let mut rng = seeded_rng(6);
    let mu = [0.1, 0.8, 0.1];
    let tau = 11.54;
    let n = 10_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| dirichlet_rng(&mut rng, &mu, tau).unwrap()).collect();
    for (m, &target) in mu.iter().enumerate() {
        let col: Vec<f64> = draws.iter().map(|d| d[m]).collect();
        assert!((mean(&col) - target).abs() < 0.02);
        let var = target * (1.0 - target) / (tau + 1.0);
        assert!((variance(&col) - var).abs() < 0.1 * var, "component {m}");
    }

    let x = [0.2, 0.5, 0.3];
    let total = 30;
    let counts: Vec<Vec<u64>> = (0..n).map(|_| multinomial_rng(&mut rng, &x, total).unwrap()).collect();
    for (k, &p) in x.iter().enumerate() {
        let col: Vec<f64> = counts.iter().map(|c| c[k] as f64).collect();
        let sd = (total as f64 * p * (1.0 - p)).sqrt();
        assert!((mean(&col) - total as f64 * p).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    let p = [1.0, 3.0, 6.0];
    let mut freq = [0usize; 3];
    for _ in 0..n {
        freq[categorical_rng(&mut rng, &p).unwrap()] += 1;
    }
    for k in 0..3 {
        let q = p[k] / 10.0;
        let f = freq[k] as f64 / n as f64;
        assert!((f - q).abs() < 4.0 * (q * (1.0 - q) / n as f64).sqrt());
    }
    assert!((0..100).all(|_| categorical_rng(&mut rng, &[1.0, 0.0]).unwrap() == 0));
}

proptest! {
    #[test]
    fn log_sum_exp_is_symmetric_and_bounded(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let v = log_sum_exp(a, b);
        prop_assert_eq!(v, log_sum_exp(b, a));
        prop_assert!(v >= a.max(b) && v <= a.max(b) + std::f64::consts::LN_2 + 1e-12);
    }

    #[test]
    fn smoothed_proportions_are_a_simplex(counts in proptest::collection::vec(0u64..1000, 2..6)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let p = CountVec::new(counts).unwrap().smoothed_proportions(0.5);
        prop_assert!(p.iter().all(|v| *v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_draws_stay_on_the_simplex(tau in 1e-3f64..1e4, seed in 0u64..1000) {
        let mut rng = seeded_rng(seed);
        let x = dirichlet_rng(&mut rng, &[0.1, 0.8, 0.1], tau).unwrap();
        prop_assert!(x.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
