mod common;

use common::{chains_se, mean, variance};
use heterobayes::distributions::{normal_rng, seeded_rng};
use heterobayes::hmc::*;
use rand::Rng;

fn config(chains: usize, iterations: usize, warmup: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains,
        iterations,
        warmup,
        seed,
        ..Default::default()
    }
}

fn std_normal(q: &[f64], g: &mut [f64]) -> f64 {
    let mut lp = 0.0;
    for (x, gi) in q.iter().zip(g.iter_mut()) {
        *gi -= x;
        lp -= 0.5 * x * x;
    }
    lp
}

fn columns(s: &PosteriorSamples, name: &str) -> Vec<Vec<f64>> {
    let i = s.param_index(name).unwrap();
    (0..s.n_chains()).map(|c| s.chain_column(c, i)).collect()
}

#[test]
fn leapfrog_properties() {
    let grad = |q: &[f64], g: &mut [f64]| {
        g[0] = -q[0];
        -0.5 * q[0] * q[0]
    };
    let (q, p) = leapfrog(&[0.7], &[-1.2], grad, 0.01, 1000).unwrap();
    let h0 = 0.5 * 0.7f64.powi(2) + 0.5 * 1.2f64.powi(2);
    let h1 = 0.5 * q[0] * q[0] + 0.5 * p[0] * p[0];
    assert!((h1 - h0).abs() < 1e-3);

    let (q2, _) = leapfrog(&q, &[-p[0]], grad, 0.01, 1000).unwrap();
    assert!((q2[0] - 0.7).abs() < 1e-10);

    let flat = |_: &[f64], g: &mut [f64]| {
        g[0] = 0.0;
        0.0
    };
    assert_eq!(leapfrog(&[0.3], &[0.0], flat, 0.1, 1).unwrap().0, vec![0.3]);

    let blowup = |q: &[f64], g: &mut [f64]| {
        g[0] = 0.0;
        if q[0] > 1.0 {
            f64::NAN
        } else {
            0.0
        }
    };
    assert_eq!(leapfrog(&[0.0], &[1.0], blowup, 0.6, 3), Err(Divergence));
}

#[test]
fn standard_normal_target() {
    let spec = TransformSpec::new().with("x", Transform::Identity).with("y", Transform::Identity);
    let s = sample(std_normal, &spec, &[0.0, 0.0], &config(3, 5500, 500, 7)).unwrap();
    let x = s.pooled("x").unwrap();
    let y = s.pooled("y").unwrap();
    assert_eq!(x.len(), 15000);
    assert!(mean(&x).abs() < 0.05, "{}", mean(&x));
    assert!((variance(&x) - 1.0).abs() < 0.10, "{}", variance(&x));
    let rho = x.iter().zip(&y).map(|(a, b)| (a - mean(&x)) * (b - mean(&y))).sum::<f64>()
        / ((x.len() - 1) as f64 * (variance(&x) * variance(&y)).sqrt());
    assert!(rho.abs() < 0.05, "rho {rho}");
    assert!(s.max_rhat().unwrap() < 1.01);
    assert!(s.warnings.is_empty());

    let summary = s.summarize("x").unwrap();
    assert!((summary.ci95.0 + 1.96).abs() < 0.06 && (summary.ci95.1 - 1.96).abs() < 0.06, "{:?}", summary.ci95);
}

#[test]
fn conjugate_normal_posterior() {
    let mut rng = seeded_rng(3);
    let y: Vec<f64> = (0..10).map(|_| normal_rng(&mut rng, 1.5, 1.0).unwrap()).collect();
    let prior_sd = 2.0;
    let precision = y.len() as f64 + 1.0 / (prior_sd * prior_sd);
    let post_mean = y.iter().sum::<f64>() / precision;
    let post_sd = precision.powf(-0.5);

    let target = |q: &[f64], g: &mut [f64]| {
        let t = q[0];
        g[0] += y.iter().map(|v| v - t).sum::<f64>() - t / (prior_sd * prior_sd);
        -0.5 * y.iter().map(|v| (v - t).powi(2)).sum::<f64>() - 0.5 * t * t / (prior_sd * prior_sd)
    };
    let spec = TransformSpec::new().with("theta", Transform::Identity);
    let s = sample(target, &spec, &[0.0], &config(4, 4000, 1000, 11)).unwrap();
    let chains = columns(&s, "theta");
    let draws = s.pooled("theta").unwrap();
    let se = chains_se(&chains);
    assert!((mean(&draws) - post_mean).abs() < 3.0 * se, "{} vs {post_mean} (se {se})", mean(&draws));
    assert!((variance(&draws).sqrt() / post_sd - 1.0).abs() < 0.05);
}

#[test]
fn positive_parameter_draws_stay_positive() {
    // HC(1) prior on θ > 0 with a N(y | θ, 1) likelihood at y = 0.3.
    let target = |q: &[f64], g: &mut [f64]| {
        let t = q[0];
        g[0] += -2.0 * t / (1.0 + t * t) + (0.3 - t);
        -(1.0 + t * t).ln() - 0.5 * (0.3 - t) * (0.3 - t)
    };
    let spec = TransformSpec::new().with("theta", Transform::Log);
    let s = sample(target, &spec, &[0.5], &config(3, 2000, 500, 5)).unwrap();
    assert!(s.pooled("theta").unwrap().iter().all(|v| *v > 0.0));
}

#[test]
fn simplex_parameter_recovers_dirichlet_moments() {
    // Sampling θ ~ Dir(2, 3, 5) through the stick-breaking map checks its
    // log-Jacobian: a wrong Jacobian shifts the means.
    let alpha = [2.0, 3.0, 5.0];
    let target = |q: &[f64], g: &mut [f64]| {
        let mut lp = 0.0;
        for k in 0..3 {
            lp += (alpha[k] - 1.0) * q[k].ln();
            g[k] += (alpha[k] - 1.0) / q[k];
        }
        lp
    };
    let spec = TransformSpec::new().with("p", Transform::StickBreaking(3));
    let s = sample(target, &spec, &[1.0 / 3.0; 3], &config(4, 5000, 1000, 9)).unwrap();
    for (k, name) in s.names.clone().iter().enumerate() {
        let chains = columns(&s, name);
        let draws = s.pooled(name).unwrap();
        let target_mean = alpha[k] / 10.0;
        assert!((mean(&draws) - target_mean).abs() < 4.0 * chains_se(&chains), "{name}: {}", mean(&draws));
        assert!(draws.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}

#[test]
fn identical_seed_and_config_are_bit_identical() {
    let spec = TransformSpec::new().with("x", Transform::Identity).with("s", Transform::Log);
    let target = |q: &[f64], g: &mut [f64]| {
        g[0] -= q[0] / (q[1] * q[1]);
        g[1] += -1.0 / q[1] + q[0] * q[0] / q[1].powi(3) - q[1];
        -q[1].ln() - 0.5 * q[0] * q[0] / (q[1] * q[1]) - 0.5 * q[1] * q[1]
    };
    let cfg = config(3, 800, 300, 42);
    let a = sample(target, &spec, &[0.1, 1.0], &cfg).unwrap();
    let b = sample(target, &spec, &[0.1, 1.0], &cfg).unwrap();
    assert_eq!(a.draws, b.draws);
    let c = sample(target, &spec, &[0.1, 1.0], &config(3, 800, 300, 43)).unwrap();
    assert_ne!(a.draws, c.draws);
    // Chain c uses seed + c, so seed 43 chain 0 equals seed 42 chain 1.
    assert_eq!(a.draws[1], c.draws[0]);
}

#[test]
fn infeasible_initialization_is_an_error() {
    let spec = TransformSpec::new().with("x", Transform::Identity);
    let nowhere = |_: &[f64], _: &mut [f64]| f64::NEG_INFINITY;
    assert!(sample(nowhere, &spec, &[0.0], &config(1, 200, 100, 1)).is_err());
}

#[test]
fn transform_round_trips() {
    let spec = TransformSpec::new()
        .with("a", Transform::Identity)
        .with("b", Transform::Log)
        .with("c", Transform::Logit)
        .with("d", Transform::StickBreaking(4));
    let mut rng = seeded_rng(8);
    for _ in 0..1000 {
        let mut theta = vec![rng.random_range(-50.0..50.0), rng.random_range(1e-6..1e6), rng.random_range(1e-6..1.0 - 1e-6)];
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        theta.extend(w.iter().map(|v| v / total));
        let u = spec.unconstrain(&theta).unwrap();
        assert_eq!(u.len(), 6);
        let back = spec.constrain(&u);
        for (x, y) in theta.iter().zip(&back) {
            assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{x} vs {y}");
        }
        let simplex = &back[3..];
        assert!(simplex.iter().all(|v| *v > 0.0));
        assert!((simplex.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rhat_examples() {
    let mut rng = seeded_rng(12);
    let draw = |rng: &mut heterobayes::distributions::SeededRng, m: f64| -> Vec<f64> {
        (0..5000).map(|_| normal_rng(rng, m, 1.0).unwrap()).collect()
    };
    let (a, b, c) = (draw(&mut rng, 0.0), draw(&mut rng, 0.0), draw(&mut rng, 0.0));
    let r = split_rhat(&[&a, &b, &c]).unwrap();
    assert!(r.value < 1.01 && !r.degenerate);

    let far = draw(&mut rng, 5.0);
    assert!(split_rhat(&[&a, &far]).unwrap().value > 2.0);

    let flat = vec![2.5; 100];
    let r = split_rhat(&[&flat, &flat]).unwrap();
    assert_eq!(r.value, 1.0);
    assert!(r.degenerate);
}

#[test]
fn summaries() {
    let draws: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(summarize_draws(&draws).median, 50.5);

    let mut rng = seeded_rng(13);
    let z: Vec<f64> = (0..15000).map(|_| normal_rng(&mut rng, 0.0, 1.0).unwrap()).collect();
    let s = summarize_draws(&z);
    assert!((s.ci95.0 + 1.96).abs() < 0.06 && (s.ci95.1 - 1.96).abs() < 0.06);
    assert!((s.hdi95.0 - s.ci95.0).abs() < 0.06 && (s.hdi95.1 - s.ci95.1).abs() < 0.06);
    assert!(s.hdi95.1 - s.hdi95.0 <= s.ci95.1 - s.ci95.0);
}
