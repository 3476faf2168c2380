//! Log-density kernels with analytic gradients, and random variate generation.
//!
//! Densities are fully normalized unless stated otherwise. The model code uses
//! the unchecked `*_lpdf` kernels directly; the checked public functions validate
//! their arguments and return [`Error::Domain`] on invalid input.

mod rng;

pub use rng::{
    categorical_rng, derive_seed, dirichlet_rng, half_cauchy_rng, lognormal_rng, multinomial_rng,
    normal_rng, seeded_rng, uniform_rng, SeededRng,
};

use serde::{Deserialize, Serialize};

use crate::special::{digamma_diff, ln_factorial, ln_gamma, ln_rising};
use crate::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Probability vector with strictly positive entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVec(Vec<f64>);

impl SimplexVec {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain(format!(
                "simplex needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain(format!("simplex entries must be positive: {values:?}")));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::domain(format!("simplex entries sum to {total}, not 1")));
        }
        Ok(SimplexVec(values))
    }

    /// Normalizes positive weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::domain("weights must have a positive finite sum"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for SimplexVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexVec::new(v)
    }
}

impl From<SimplexVec> for Vec<f64> {
    fn from(s: SimplexVec) -> Vec<f64> {
        s.0
    }
}

/// Vector of non-negative category counts with at least one observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct CountVec(Vec<u64>);

impl CountVec {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::domain(format!(
                "count vector needs at least 2 categories, got {}",
                counts.len()
            )));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::domain("count vector must contain at least one observation"));
        }
        Ok(CountVec(counts))
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Proportions after adding `pseudo_count` to every bin.
    pub fn smoothed_proportions(&self, pseudo_count: f64) -> SimplexVec {
        let total = self.total() as f64 + pseudo_count * self.len() as f64;
        let mut p: Vec<f64> = self
            .0
            .iter()
            .map(|&c| (c as f64 + pseudo_count) / total)
            .collect();
        renormalize(&mut p);
        SimplexVec(p)
    }

    /// Plain proportions `y / N` (entries may be zero).
    pub fn proportions(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.0.iter().map(|&c| c as f64 / total).collect()
    }
}

impl std::ops::Deref for CountVec {
    type Target = [u64];
    fn deref(&self) -> &[u64] {
        &self.0
    }
}

impl TryFrom<Vec<u64>> for CountVec {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        CountVec::new(v)
    }
}

impl From<CountVec> for Vec<u64> {
    fn from(c: CountVec) -> Vec<u64> {
        c.0
    }
}

fn renormalize(p: &mut [f64]) {
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
}

/// Value and partial derivatives of a normal log-density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalTerm {
    pub value: f64,
    pub d_x: f64,
    pub d_mu: f64,
    pub d_sigma: f64,
}

#[inline]
pub(crate) fn normal_lpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * LN_2PI - sigma.ln() - 0.5 * z * z
}

#[inline]
pub(crate) fn normal_lpdf_grad(x: f64, mu: f64, sigma: f64) -> NormalTerm {
    let r = x - mu;
    let inv_s2 = 1.0 / (sigma * sigma);
    NormalTerm {
        value: -0.5 * LN_2PI - sigma.ln() - 0.5 * r * r * inv_s2,
        d_x: -r * inv_s2,
        d_mu: r * inv_s2,
        d_sigma: -1.0 / sigma + r * r * inv_s2 / sigma,
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `ln N(x; mu, sigma)`.
pub fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    Ok(normal_logpdf_grad(x, mu, sigma)?.value)
}

/// `ln N(x; mu, sigma)` together with its partial derivatives.
pub fn normal_logpdf_grad(x: f64, mu: f64, sigma: f64) -> Result<NormalTerm> {
    check_finite("x", x)?;
    check_finite("mu", mu)?;
    check_positive("sigma", sigma)?;
    Ok(normal_lpdf_grad(x, mu, sigma))
}

/// Half-Cauchy log-density `ln[2 / (πγ(1 + (x/γ)²))]` and its derivative in `x`.
#[inline]
pub(crate) fn half_cauchy_lpdf_grad(x: f64, gamma: f64) -> (f64, f64) {
    let r = x / gamma;
    let value = std::f64::consts::LN_2 - LN_PI - gamma.ln() - (r * r).ln_1p();
    let d_x = -2.0 * x / (gamma * gamma + x * x);
    (value, d_x)
}

pub fn half_cauchy_logpdf(x: f64, gamma: f64) -> Result<f64> {
    Ok(half_cauchy_logpdf_grad(x, gamma)?.0)
}

/// Half-Cauchy log-density and its derivative with respect to `x`.
pub fn half_cauchy_logpdf_grad(x: f64, gamma: f64) -> Result<(f64, f64)> {
    check_positive("gamma", gamma)?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::domain(format!("half-Cauchy support is x >= 0, got {x}")));
    }
    Ok(half_cauchy_lpdf_grad(x, gamma))
}

/// Standard Student-t log-density with `nu` degrees of freedom.
pub fn student_t_logpdf(t: f64, nu: f64) -> Result<f64> {
    check_finite("t", t)?;
    check_positive("nu", nu)?;
    Ok(ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu.ln() + LN_PI)
        - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p())
}

/// Dirichlet log-density in mean-concentration form: concentration `tau * mu`.
///
/// Returns `-inf` when any `x_m <= 0`.
pub fn dirichlet_logpdf(x: &[f64], mu: &SimplexVec, tau: f64) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: x.len(),
        });
    }
    check_positive("tau", tau)?;
    if x.iter().any(|&v| v <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(dirichlet_lpdf(x, mu, tau))
}

pub(crate) fn dirichlet_lpdf(x: &[f64], mu: &[f64], tau: f64) -> f64 {
    let mut lp = ln_gamma(tau);
    for (&xm, &mm) in x.iter().zip(mu) {
        let a = tau * mm;
        lp += (a - 1.0) * xm.ln() - ln_gamma(a);
    }
    lp
}

/// Multinomial log-mass including the coefficient `n! / ∏ y_k!`.
pub fn multinomial_logpmf(y: &CountVec, x: &SimplexVec, n: u64) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if y.total() != n {
        return Err(Error::domain(format!(
            "counts sum to {} but n = {n}",
            y.total()
        )));
    }
    let mut lp = ln_factorial(n);
    for (&c, &p) in y.iter().zip(x.iter()) {
        lp -= ln_factorial(c);
        if c > 0 {
            lp += c as f64 * p.ln();
        }
    }
    Ok(lp)
}

/// Dirichlet-Multinomial log-mass for concentration `prec * mu`.
///
/// With `normalized == false` the multinomial coefficient is omitted, which
/// leaves a quantity that differs from the normalized mass by a term constant
/// in the parameters.
pub fn dirichlet_multinomial_logpmf(
    y: &CountVec,
    mu: &SimplexVec,
    prec: f64,
    normalized: bool,
) -> Result<f64> {
    if y.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: y.len(),
        });
    }
    check_positive("prec", prec)?;
    let alpha: Vec<f64> = mu.iter().map(|m| m * prec).collect();
    let mut lp = dm_lpmf(y, &alpha);
    if normalized {
        lp += ln_factorial(y.total()) - y.iter().map(|&c| ln_factorial(c)).sum::<f64>();
    }
    Ok(lp)
}

/// Unnormalized Dirichlet-Multinomial log-mass for a concentration vector `alpha`:
/// `lnΓ(A) - lnΓ(N + A) + Σ [lnΓ(y_k + α_k) - lnΓ(α_k)]`, `A = Σ α_k`.
pub fn dm_lpmf(y: &[u64], alpha: &[f64]) -> f64 {
    let a_sum: f64 = alpha.iter().sum();
    let n: u64 = y.iter().sum();
    let mut lp = -ln_rising(a_sum, n);
    for (&c, &a) in y.iter().zip(alpha) {
        lp += ln_rising(a, c);
    }
    lp
}

/// [`dm_lpmf`] plus its gradient with respect to each `α_k`, written into `grad`.
pub fn dm_lpmf_grad(y: &[u64], alpha: &[f64], grad: &mut [f64]) -> f64 {
    let a_sum: f64 = alpha.iter().sum();
    let n: u64 = y.iter().sum();
    let common = -digamma_diff(a_sum, n);
    let mut lp = -ln_rising(a_sum, n);
    for ((&c, &a), g) in y.iter().zip(alpha).zip(grad.iter_mut()) {
        lp += ln_rising(a, c);
        *g = common + digamma_diff(a, c);
    }
    lp
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
