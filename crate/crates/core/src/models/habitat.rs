use serde::{Deserialize, Serialize};

use super::{LesionId, MixtureModel};
use crate::distributions::{dm_lpmf, dm_lpmf_grad, half_cauchy_lpdf_grad, log_sum_exp, CountVec, SimplexVec};
use crate::hmc::{Transform, TransformSpec};
use crate::special::ln_gamma;
use crate::{Error, Result};

/// Habitat counts: second-scan repeat-baseline counts and post-treatment
/// counts per lesion, with the fixed baseline habitat proportions `mu0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HabitatDataset {
    pub mu0: SimplexVec,
    pub yb: Vec<CountVec>,
    pub yp: Vec<CountVec>,
    pub baseline_ids: Vec<LesionId>,
    pub post_ids: Vec<LesionId>,
}

impl HabitatDataset {
    /// The baseline proportions implied by 10th/90th percentile bins.
    pub fn default_mu0() -> SimplexVec {
        SimplexVec::new(vec![0.1, 0.8, 0.1]).expect("valid simplex")
    }

    pub fn new(mu0: SimplexVec, yb: Vec<CountVec>, yp: Vec<CountVec>) -> Result<Self> {
        let baseline_ids = LesionId::sequence("b", yb.len());
        let post_ids = LesionId::sequence("p", yp.len());
        Self::with_ids(mu0, yb, yp, baseline_ids, post_ids)
    }

    pub fn with_ids(
        mu0: SimplexVec,
        yb: Vec<CountVec>,
        yp: Vec<CountVec>,
        baseline_ids: Vec<LesionId>,
        post_ids: Vec<LesionId>,
    ) -> Result<Self> {
        if yb.is_empty() || yp.is_empty() {
            return Err(Error::data("need at least one baseline and one post-treatment lesion"));
        }
        let k = mu0.len();
        if let Some(bad) = yb.iter().chain(&yp).find(|c| c.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        if baseline_ids.len() != yb.len() || post_ids.len() != yp.len() {
            return Err(Error::data("identifier count does not match data"));
        }
        Ok(HabitatDataset {
            mu0,
            yb,
            yp,
            baseline_ids,
            post_ids,
        })
    }

    pub fn k(&self) -> usize {
        self.mu0.len()
    }
}

/// Constrained parameters of the habitat model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HabitatParams {
    pub prec: f64,
    pub conc: f64,
    pub mu1: SimplexVec,
    pub lambda: f64,
}

impl HabitatParams {
    /// Flattened as `prec, conc, mu1[1..K], lambda`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.prec, self.conc];
        v.extend_from_slice(&self.mu1);
        v.push(self.lambda);
        v
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        let k = theta.len() - 3;
        Ok(HabitatParams {
            prec: theta[0],
            conc: theta[1],
            mu1: SimplexVec::new(theta[2..2 + k].to_vec())?,
            lambda: theta[2 + k],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HabitatPriors {
    /// Half-Cauchy scale for `prec` and `conc`.
    pub prec_prior: f64,
}

impl Default for HabitatPriors {
    fn default() -> Self {
        HabitatPriors { prec_prior: 50.0 }
    }
}

/// The Dirichlet-Multinomial habitat mixture model as an HMC target.
#[derive(Debug, Clone)]
pub struct HabitatModel {
    pub data: HabitatDataset,
    pub priors: HabitatPriors,
    pub include_post: bool,
}

impl HabitatModel {
    pub fn new(data: HabitatDataset, priors: HabitatPriors) -> Result<Self> {
        if !(priors.prec_prior > 0.0) {
            return Err(Error::Usage("prec_prior must be positive".into()));
        }
        Ok(HabitatModel {
            data,
            priors,
            include_post: true,
        })
    }

    pub fn without_post(mut self) -> Self {
        self.include_post = false;
        self
    }

    pub fn log_posterior(&self, params: &HabitatParams) -> (f64, Vec<f64>) {
        let theta = params.to_vec();
        let mut grad = vec![0.0; theta.len()];
        let lp = self.lp_grad(&theta, &mut grad);
        (lp, grad)
    }

    fn lp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.data.k();
        let (prec, conc, lambda) = (theta[0], theta[1], theta[2 + k]);
        let mu1 = &theta[2..2 + k];
        let valid = prec > 0.0
            && conc > 0.0
            && prec.is_finite()
            && conc.is_finite()
            && lambda > 0.0
            && lambda < 1.0
            && mu1.iter().all(|m| *m > 0.0);
        if !valid {
            return f64::NEG_INFINITY;
        }
        let mu0 = self.data.mu0.as_slice();
        let gamma = self.priors.prec_prior;

        let (v0, d0) = half_cauchy_lpdf_grad(prec, gamma);
        let (v1, d1) = half_cauchy_lpdf_grad(conc, gamma);
        // Flat Dirichlet prior on mu1: density Γ(K).
        let mut lp = v0 + v1 + ln_gamma(k as f64);
        grad[0] += d0;
        grad[1] += d1;

        let alpha0: Vec<f64> = mu0.iter().map(|m| m * prec).collect();
        let alpha1: Vec<f64> = mu1.iter().map(|m| m * conc).collect();
        let mut ga = vec![0.0; k];

        for y in &self.data.yb {
            lp += dm_lpmf_grad(y, &alpha0, &mut ga);
            grad[0] += dot(mu0, &ga);
        }

        if self.include_post {
            let l0 = (-lambda).ln_1p();
            let l1 = lambda.ln();
            let mut gb = vec![0.0; k];
            let mut g_lam = 0.0;
            for y in &self.data.yp {
                let a = l0 + dm_lpmf_grad(y, &alpha0, &mut ga);
                let b = l1 + dm_lpmf_grad(y, &alpha1, &mut gb);
                let l = log_sum_exp(a, b);
                let w0 = (a - l).exp();
                let w1 = (b - l).exp();
                lp += l;
                g_lam += -w0 / (1.0 - lambda) + w1 / lambda;
                grad[0] += w0 * dot(mu0, &ga);
                grad[1] += w1 * dot(mu1, &gb);
                for (g, gbk) in grad[2..2 + k].iter_mut().zip(&gb) {
                    *g += w1 * conc * gbk;
                }
            }
            grad[2 + k] += g_lam;
        }
        lp
    }

    /// Starting point: method-of-moments precision from the baseline counts,
    /// mean smoothed post-treatment proportions for `mu1`, `conc = prec`, `λ = 0.5`.
    pub fn initial_params(&self) -> HabitatParams {
        let mu0 = self.data.mu0.as_slice();
        let k = mu0.len() as f64;
        let (mut s_sum, mut n_sum) = (0.0, 0.0);
        for y in &self.data.yb {
            let n = y.total() as f64;
            let s: f64 = y
                .iter()
                .zip(mu0)
                .map(|(&c, &m)| {
                    let r = c as f64 / n - m;
                    r * r / m
                })
                .sum();
            s_sum += n * s / (k - 1.0);
            n_sum += n;
        }
        let count = self.data.yb.len() as f64;
        // E[Σ_j N_j s_j / (K−1)] = Σ_j (N_j + τ) / (1 + τ)
        let tau = (n_sum - s_sum) / (s_sum - count);
        let prec = if tau.is_finite() && tau > 0.0 { tau.clamp(0.5, 1e4) } else { 10.0 };

        let mut mean = vec![0.0; mu0.len()];
        for y in &self.data.yp {
            for (m, p) in mean.iter_mut().zip(y.smoothed_proportions(0.5).iter()) {
                *m += p / self.data.yp.len() as f64;
            }
        }
        HabitatParams {
            prec,
            conc: prec,
            mu1: SimplexVec::from_weights(&mean).unwrap_or_else(|_| self.data.mu0.clone()),
            lambda: 0.5,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl MixtureModel for HabitatModel {
    fn transform(&self) -> TransformSpec {
        TransformSpec::new()
            .with("prec", Transform::Log)
            .with("conc", Transform::Log)
            .with("mu1", Transform::StickBreaking(self.data.k()))
            .with("lambda", Transform::Logit)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.lp_grad(theta, grad)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.initial_params().to_vec()
    }

    fn lesion_ids(&self) -> &[LesionId] {
        &self.data.post_ids
    }

    fn component_lps(&self, theta: &[f64], lesion: usize) -> (f64, f64) {
        let k = self.data.k();
        let (prec, conc, lambda) = (theta[0], theta[1], theta[2 + k]);
        let alpha0: Vec<f64> = self.data.mu0.iter().map(|m| m * prec).collect();
        let alpha1: Vec<f64> = theta[2..2 + k].iter().map(|m| m * conc).collect();
        let y = &self.data.yp[lesion];
        (
            (-lambda).ln_1p() + dm_lpmf(y, &alpha0),
            lambda.ln() + dm_lpmf(y, &alpha1),
        )
    }

    fn lambda_index(&self) -> usize {
        2 + self.data.k()
    }
}

/// Log-posterior of the habitat model and its gradient, flattened as
/// `prec, conc, mu1[1..K], lambda`. Invalid parameters give `-inf`.
pub fn habitat_logposterior(
    params: &HabitatParams,
    data: &HabitatDataset,
    priors: &HabitatPriors,
) -> Result<(f64, Vec<f64>)> {
    if params.mu1.len() != data.k() {
        return Err(Error::DimensionMismatch {
            expected: data.k(),
            found: params.mu1.len(),
        });
    }
    Ok(HabitatModel::new(data.clone(), *priors)?.log_posterior(params))
}
