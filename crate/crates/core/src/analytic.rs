//! Closed-form repeatability statistics, the conditional predictive under the
//! no-change model, the classical p-value for a change, and Bayes factors for
//! a single lesion.

use serde::{Deserialize, Serialize};

use crate::special::student_t_two_sided;
use crate::{Error, Result};

const Z_975: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityEstimate {
    pub sigma_hat: f64,
    pub n_pairs: usize,
    /// `NaN` when no population spread was supplied.
    pub icc: f64,
    /// `NaN` when no population mean was supplied.
    pub cov_pct: f64,
    pub rc: f64,
}

impl RepeatabilityEstimate {
    /// Estimates σ̂ and RC from repeat pairs. ICC uses `sigma0` and CoV uses
    /// `mu0` when given, otherwise the sample spread and mean of the pair means.
    pub fn from_pairs(pairs: &[(f64, f64)], sigma0: Option<f64>, mu0: Option<f64>) -> Result<Self> {
        let sigma_hat = sigma_lsq(pairs)?;
        let means: Vec<f64> = pairs.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let mu0 = mu0.unwrap_or_else(|| crate::stats::mean(&means));
        let sigma0 = match sigma0 {
            Some(s) => Some(s),
            None if pairs.len() >= 2 => {
                // Var(pair mean) = σ0² + σ²/2.
                let v = crate::stats::variance(&means) - 0.5 * sigma_hat * sigma_hat;
                Some(v.max(0.0).sqrt())
            }
            None => None,
        };
        Ok(RepeatabilityEstimate {
            sigma_hat,
            n_pairs: pairs.len(),
            icc: sigma0.map_or(f64::NAN, |s0| icc(s0, sigma_hat).unwrap_or(f64::NAN)),
            cov_pct: cov(sigma_hat, mu0).unwrap_or(f64::NAN),
            rc: rc(sigma_hat),
        })
    }
}

/// Effect parameters of a change model, with derived heterogeneity `eta` and
/// effect size `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectParams {
    pub mu_delta: f64,
    pub sigma_delta: f64,
    pub sigma: f64,
    pub eta: f64,
    pub xi: f64,
}

impl EffectParams {
    pub fn new(mu_delta: f64, sigma_delta: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
        }
        if !(sigma_delta >= 0.0 && sigma_delta.is_finite()) {
            return Err(Error::domain(format!("sigma_delta must be non-negative, got {sigma_delta}")));
        }
        if !mu_delta.is_finite() {
            return Err(Error::domain("mu_delta must be finite"));
        }
        let s2 = sigma_delta * sigma_delta;
        Ok(EffectParams {
            mu_delta,
            sigma_delta,
            sigma,
            eta: s2 / (s2 + 2.0 * sigma * sigma),
            xi: mu_delta.abs() / (std::f64::consts::SQRT_2 * sigma),
        })
    }

    /// Builds the effect from `eta` instead of `sigma_delta`.
    pub fn from_eta(mu_delta: f64, eta: f64, sigma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::domain(format!("eta must lie in [0, 1), got {eta}")));
        }
        let sigma_delta = sigma * (2.0 * eta / (1.0 - eta)).sqrt();
        let mut e = Self::new(mu_delta, sigma_delta, sigma)?;
        e.eta = eta;
        Ok(e)
    }
}

/// Least-squares measurement error `√(Σ(y2−y1)² / (2N))`.
pub fn sigma_lsq(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::domain("at least one repeat pair is required"));
    }
    if pairs.iter().any(|(a, b)| !(a.is_finite() && b.is_finite())) {
        return Err(Error::domain("repeat pairs must be finite"));
    }
    let ss: f64 = pairs.iter().map(|(a, b)| (b - a) * (b - a)).sum();
    Ok((ss / (2.0 * pairs.len() as f64)).sqrt())
}

/// Intraclass correlation `σ0² / (σ0² + σ²)`.
pub fn icc(sigma0: f64, sigma: f64) -> Result<f64> {
    if !(sigma0 >= 0.0 && sigma >= 0.0) || sigma0 + sigma == 0.0 {
        return Err(Error::domain(format!("icc undefined for sigma0={sigma0}, sigma={sigma}")));
    }
    if sigma0.is_infinite() {
        return Ok(1.0);
    }
    let a = sigma0 * sigma0;
    Ok(a / (a + sigma * sigma))
}

/// Coefficient of variation `σ/μ0` in percent.
pub fn cov(sigma: f64, mu0: f64) -> Result<f64> {
    if mu0 == 0.0 || !mu0.is_finite() {
        return Err(Error::domain("coefficient of variation needs a nonzero mean"));
    }
    Ok(sigma / mu0 * 100.0)
}

/// Repeatability coefficient `1.96·√2·σ̂`.
pub fn rc(sigma_hat: f64) -> f64 {
    Z_975 * std::f64::consts::SQRT_2 * sigma_hat
}

/// Mean and standard deviation of the normal predictive for a repeat
/// measurement given a first reading `y0`, under no change.
pub fn conditional_predictive_m0(y0: f64, mu0: f64, sigma0: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    let r = icc(sigma0, sigma)?;
    Ok((r * y0 + (1.0 - r) * mu0, (1.0 + r).sqrt() * sigma))
}

/// Two-sided p-value for an observed change `d` given repeat-baseline pairs,
/// from a Student-t with `N_b` degrees of freedom at `t = d / (√2 σ̂)`.
pub fn pvalue_change(d: f64, pairs: &[(f64, f64)]) -> Result<f64> {
    let s = sigma_lsq(pairs)?;
    if s == 0.0 {
        return Err(Error::domain("all baseline differences are zero"));
    }
    let t = d / (std::f64::consts::SQRT_2 * s);
    Ok(student_t_two_sided(t, pairs.len() as f64))
}

/// Natural log of the Bayes factor of change versus no change for an observed
/// difference `dy`.
pub fn log_bf10(dy: f64, effect: &EffectParams) -> Result<f64> {
    let eta = effect.eta;
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::domain(format!("eta must lie in [0, 1), got {eta}")));
    }
    let s = std::f64::consts::SQRT_2 * effect.sigma;
    let a = (dy - effect.mu_delta) / s;
    let b = dy / s;
    Ok(0.5 * ((1.0 - eta).ln() - (1.0 - eta) * a * a + b * b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    M0,
    M1,
}

/// Expected log Bayes factor when data come from `under`.
pub fn expected_log_bf(eta: f64, xi: f64, under: Hypothesis) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::domain(format!("eta must lie in [0, 1), got {eta}")));
    }
    let l = (1.0 - eta).ln();
    Ok(match under {
        Hypothesis::M0 => 0.5 * (l + eta - (1.0 - eta) * xi * xi),
        Hypothesis::M1 => 0.5 * (l + eta / (1.0 - eta) + xi * xi),
    })
}

/// Evidence bands for a Bayes factor `BF10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evidence {
    VeryStrongM1,
    StrongM1,
    ModerateM1,
    AnecdotalM1,
    AnecdotalM0,
    ModerateM0,
    StrongM0,
}

impl Evidence {
    pub fn label(&self) -> &'static str {
        match self {
            Evidence::VeryStrongM1 => "Very strong evidence for M1",
            Evidence::StrongM1 => "Strong evidence for M1",
            Evidence::ModerateM1 => "Moderate evidence for M1",
            Evidence::AnecdotalM1 => "Anecdotal evidence for M1",
            Evidence::AnecdotalM0 => "Anecdotal evidence for M0",
            Evidence::ModerateM0 => "Moderate evidence for M0",
            Evidence::StrongM0 => "Strong evidence for M0",
        }
    }
}

impl std::fmt::Display for Evidence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Evidence band for `bf`; a value on a shared boundary goes to the band with
/// stronger evidence.
pub fn interpret_bf(bf: f64) -> Result<Evidence> {
    if !(bf > 0.0) {
        return Err(Error::domain(format!("Bayes factor must be positive, got {bf}")));
    }
    Ok(if bf > 30.0 {
        Evidence::VeryStrongM1
    } else if bf >= 10.0 {
        Evidence::StrongM1
    } else if bf >= 3.0 {
        Evidence::ModerateM1
    } else if bf >= 1.0 {
        Evidence::AnecdotalM1
    } else if 3.0 * bf > 1.0 {
        Evidence::AnecdotalM0
    } else if 10.0 * bf >= 1.0 {
        Evidence::ModerateM0
    } else {
        Evidence::StrongM0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_lsq(&[(1.0, 1.0), (2.0, 2.0)]).unwrap(), 0.0);
        assert_relative_eq!(sigma_lsq(&[(0.0, 2.0)]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(
            sigma_lsq(&[(0.0, 1.0), (1.0, 0.0), (2.0, 2.0)]).unwrap(),
            0.577_350_3,
            epsilon = 1e-7
        );
        assert!(sigma_lsq(&[]).is_err());
    }

    #[test]
    fn icc_cov_rc() {
        assert_eq!(icc(0.3, 0.3).unwrap(), 0.5);
        assert_eq!(icc(0.3, 0.0).unwrap(), 1.0);
        assert_relative_eq!(icc(0.2, 0.05).unwrap(), 0.941_176_5, epsilon = 1e-7);
        assert_relative_eq!(rc(0.05), 0.138_592_9, epsilon = 1e-7);
        assert_relative_eq!(cov(0.05, 1.0).unwrap(), 5.0);
        assert!(cov(0.05, 0.0).is_err());
    }

    #[test]
    fn predictive_examples() {
        let (m, s) = conditional_predictive_m0(1.2, 1.0, 0.2, 0.05).unwrap();
        assert_relative_eq!(m, 1.188_235_3, epsilon = 1e-7);
        assert_relative_eq!(s, 0.069_663_05, epsilon = 1e-7);
        let (m, s) = conditional_predictive_m0(1.2, 1.0, 0.0, 0.05).unwrap();
        assert_eq!((m, s), (1.0, 0.05));
    }

    #[test]
    fn pvalue_at_zero_is_one() {
        let pairs = [(1.0, 1.1), (0.9, 0.85), (1.2, 1.25)];
        assert_relative_eq!(pvalue_change(0.0, &pairs).unwrap(), 1.0, epsilon = 1e-14);
        assert!(pvalue_change(0.1, &[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn bf_reductions() {
        let e = EffectParams::from_eta(0.0, 0.9, 0.05).unwrap();
        assert_relative_eq!(log_bf10(0.0, &e).unwrap(), 0.5 * 0.1f64.ln(), epsilon = 1e-12);
        let e = EffectParams::from_eta(0.3, 0.7, 0.05).unwrap();
        let xi = 0.3 / (2f64.sqrt() * 0.05);
        assert_relative_eq!(
            log_bf10(0.3, &e).unwrap(),
            0.5 * (0.3f64.ln() + xi * xi),
            epsilon = 1e-10
        );
    }

    #[test]
    fn expected_bf_examples() {
        for h in [Hypothesis::M0, Hypothesis::M1] {
            assert_eq!(expected_log_bf(0.0, 0.0, h).unwrap(), 0.0);
        }
        assert_relative_eq!(expected_log_bf(0.9, 1.0, Hypothesis::M1).unwrap(), 3.848_707_2, epsilon = 1e-6);
        assert_relative_eq!(expected_log_bf(0.9, 1.0, Hypothesis::M0).unwrap(), -0.751_292_5, epsilon = 1e-6);
        assert!(expected_log_bf(1.0, 0.0, Hypothesis::M0).is_err());
    }

    #[test]
    fn evidence_bands() {
        let cases = [
            (50.0, Evidence::VeryStrongM1),
            (30.0, Evidence::StrongM1),
            (10.0, Evidence::StrongM1),
            (9.99, Evidence::ModerateM1),
            (3.0, Evidence::ModerateM1),
            (1.0, Evidence::AnecdotalM1),
            (0.5, Evidence::AnecdotalM0),
            (1.0 / 3.0, Evidence::ModerateM0),
            (0.1, Evidence::ModerateM0),
            (0.05, Evidence::StrongM0),
        ];
        for (bf, band) in cases {
            assert_eq!(interpret_bf(bf).unwrap(), band, "bf={bf}");
        }
        assert_eq!(Evidence::VeryStrongM1.to_string(), "Very strong evidence for M1");
    }
}
