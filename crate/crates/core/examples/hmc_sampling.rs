//! The HMC sampler on a user-supplied target: a normal mean and a positive
//! scale, with the scale sampled on the log scale.

use heterobayes::distributions::{normal_rng, seeded_rng};
use heterobayes::hmc::{sample, SamplerConfig, Transform, TransformSpec};

fn main() -> heterobayes::Result<()> {
    let mut rng = seeded_rng(9);
    let y: Vec<f64> = (0..50).map(|_| normal_rng(&mut rng, 2.0, 0.7)).collect::<heterobayes::Result<_>>()?;

    // y ~ N(mu, s), mu ~ N(0, 10), s ~ half-Cauchy(0, 5); the gradient is added into `g`.
    let target = |q: &[f64], g: &mut [f64]| {
        let (mu, s) = (q[0], q[1]);
        let ss: f64 = y.iter().map(|v| (v - mu).powi(2)).sum();
        let n = y.len() as f64;
        g[0] += y.iter().map(|v| v - mu).sum::<f64>() / (s * s) - mu / 100.0;
        g[1] += -n / s + ss / s.powi(3) - 2.0 * s / (25.0 + s * s);
        -n * s.ln() - 0.5 * ss / (s * s) - 0.5 * mu * mu / 100.0 - (1.0 + s * s / 25.0).ln()
    };
    let spec = TransformSpec::new().with("mu", Transform::Identity).with("s", Transform::Log);
    let draws = sample(target, &spec, &[0.0, 1.0], &SamplerConfig { seed: 9, ..Default::default() })?;

    for name in ["mu", "s"] {
        let s = draws.summarize(name)?;
        println!("{name}: mean {:.4}, sd {:.4}, 95% HDI [{:.4}, {:.4}]", s.mean, s.sd, s.hdi95.0, s.hdi95.1);
    }
    println!("max R-hat {:.4}, warnings {:?}", draws.max_rhat()?, draws.warnings);
    Ok(())
}
