use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};

use crate::{Error, Result};

/// The generator used throughout the crate: counter-based ChaCha8.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a base seed and a path of indices,
/// e.g. `derive_seed(study_seed, &[combo, rep])`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0xA5A5_A5A5))))
}

fn invalid(msg: String) -> Error {
    Error::Domain(msg)
}

/// Normal draw; `sigma == 0` yields the point mass at `mu`.
pub fn normal_rng<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> Result<f64> {
    if !mu.is_finite() || !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid(format!("normal_rng: invalid mu={mu}, sigma={sigma}")));
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(mu + sigma * z)
}

pub fn uniform_rng<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(invalid(format!("uniform_rng: invalid bounds [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(lo);
    }
    Ok(lo + (hi - lo) * rng.random::<f64>())
}

pub fn lognormal_rng<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> Result<f64> {
    Ok(normal_rng(rng, mu, sigma)?.exp())
}

pub fn half_cauchy_rng<R: Rng + ?Sized>(rng: &mut R, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(invalid(format!("half_cauchy_rng: invalid gamma={gamma}")));
    }
    let u: f64 = rng.random();
    Ok(gamma * (0.5 * std::f64::consts::PI * u).tan())
}

/// Logarithm of a Gamma(shape, 1) draw, stable for very small shapes.
fn ln_gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
        return g.sample(rng).ln();
    }
    let g = Gamma::new(shape + 1.0, 1.0).expect("valid gamma shape");
    let u: f64 = rng.random();
    g.sample(rng).ln() + (1.0 - u).ln() / shape
}

/// Dirichlet draw with concentration `tau * mu`.
///
/// Entries can underflow to zero for very small concentrations; the result
/// always sums to one.
pub fn dirichlet_rng<R: Rng + ?Sized>(rng: &mut R, mu: &[f64], tau: f64) -> Result<Vec<f64>> {
    if mu.len() < 2 || mu.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(invalid(format!("dirichlet_rng: invalid mean {mu:?}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(invalid(format!("dirichlet_rng: invalid tau={tau}")));
    }
    let total: f64 = mu.iter().sum();
    let logs: Vec<f64> = mu
        .iter()
        .map(|m| ln_gamma_draw(rng, tau * m / total))
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut x: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    Ok(x)
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial_rng<R: Rng + ?Sized>(rng: &mut R, x: &[f64], n: u64) -> Result<Vec<u64>> {
    if x.is_empty() || x.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(invalid(format!("multinomial_rng: invalid probabilities {x:?}")));
    }
    let mut mass: f64 = x.iter().sum();
    if mass <= 0.0 {
        return Err(invalid("multinomial_rng: probabilities sum to zero".into()));
    }
    let mut remaining = n;
    let mut out = vec![0u64; x.len()];
    for (k, &p) in x.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == x.len() {
            out[k] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .map_err(|e| invalid(format!("multinomial_rng: {e}")))?
                .sample(rng)
        };
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    Ok(out)
}

/// Zero-based categorical draw from non-negative (unnormalized) weights.
pub fn categorical_rng<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> Result<usize> {
    if p.is_empty() || p.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid(format!("categorical_rng: invalid weights {p:?}")));
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(invalid("categorical_rng: weights sum to zero".into()));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in p.iter().enumerate() {
        if w > 0.0 {
            last = k;
            acc += w;
            if u < acc {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded_rng(42);
        let mut b = seeded_rng(42);
        for _ in 0..10 {
            assert_eq!(normal_rng(&mut a, 0.0, 1.0).unwrap(), normal_rng(&mut b, 0.0, 1.0).unwrap());
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s = derive_seed(7, &[0, 0]);
        assert_ne!(s, derive_seed(7, &[0, 1]));
        assert_ne!(s, derive_seed(7, &[1, 0]));
        assert_ne!(s, derive_seed(8, &[0, 0]));
        assert_eq!(s, derive_seed(7, &[0, 0]));
    }

    #[test]
    fn degenerate_categorical() {
        let mut rng = seeded_rng(1);
        for _ in 0..1000 {
            assert_eq!(categorical_rng(&mut rng, &[1.0, 0.0]).unwrap(), 0);
        }
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = seeded_rng(3);
        for n in [0u64, 1, 5, 584, 100_000] {
            let y = multinomial_rng(&mut rng, &[0.2, 0.5, 0.3], n).unwrap();
            assert_eq!(y.iter().sum::<u64>(), n);
        }
    }

    #[test]
    fn tiny_concentration_dirichlet_is_finite() {
        let mut rng = seeded_rng(5);
        for _ in 0..100 {
            let x = dirichlet_rng(&mut rng, &[0.01, 0.54, 0.45], 0.05).unwrap();
            assert!(x.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut rng = seeded_rng(0);
        assert!(normal_rng(&mut rng, 0.0, -1.0).is_err());
        assert!(dirichlet_rng(&mut rng, &[0.5, 0.5], 0.0).is_err());
        assert!(half_cauchy_rng(&mut rng, 0.0).is_err());
        assert!(categorical_rng(&mut rng, &[0.0, 0.0]).is_err());
    }
}
