use serde::{Deserialize, Serialize};

use super::{LesionId, MixtureModel};
use crate::analytic::sigma_lsq;
use crate::distributions::{half_cauchy_lpdf_grad, log_sum_exp, normal_lpdf, normal_lpdf_grad, LN_2PI};
use crate::hmc::{Transform, TransformSpec};
use crate::stats;
use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Double-baseline pairs and pre/post pairs of a real-valued biomarker, in
/// units of 10⁻³ mm²/s.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianAdcDataset {
    pub yb1: Vec<f64>,
    pub yb2: Vec<f64>,
    pub yp1: Vec<f64>,
    pub yp2: Vec<f64>,
    /// Identifiers of the pre/post lesions, aligned with `yp1`.
    pub post_ids: Vec<LesionId>,
    /// Identifiers of the baseline lesions, aligned with `yb1`.
    pub baseline_ids: Vec<LesionId>,
}

impl MedianAdcDataset {
    /// Builds a dataset with positional identifiers.
    pub fn new(yb1: Vec<f64>, yb2: Vec<f64>, yp1: Vec<f64>, yp2: Vec<f64>) -> Result<Self> {
        let baseline_ids = LesionId::sequence("b", yb1.len());
        let post_ids = LesionId::sequence("p", yp1.len());
        Self::with_ids(yb1, yb2, yp1, yp2, baseline_ids, post_ids)
    }

    pub fn with_ids(
        yb1: Vec<f64>,
        yb2: Vec<f64>,
        yp1: Vec<f64>,
        yp2: Vec<f64>,
        baseline_ids: Vec<LesionId>,
        post_ids: Vec<LesionId>,
    ) -> Result<Self> {
        if yb1.is_empty() || yp1.is_empty() {
            return Err(Error::data("need at least one baseline pair and one pre/post pair"));
        }
        if yb1.len() != yb2.len() || yp1.len() != yp2.len() {
            return Err(Error::data("paired vectors must have equal lengths"));
        }
        if baseline_ids.len() != yb1.len() || post_ids.len() != yp1.len() {
            return Err(Error::data("identifier count does not match data"));
        }
        if yb1.iter().chain(&yb2).chain(&yp1).chain(&yp2).any(|v| !v.is_finite()) {
            return Err(Error::data("measurements must be finite"));
        }
        Ok(MedianAdcDataset {
            yb1,
            yb2,
            yp1,
            yp2,
            post_ids,
            baseline_ids,
        })
    }

    pub fn n_baseline(&self) -> usize {
        self.yb1.len()
    }

    pub fn n_post(&self) -> usize {
        self.yp1.len()
    }

    pub fn baseline_pairs(&self) -> Vec<(f64, f64)> {
        self.yb1.iter().copied().zip(self.yb2.iter().copied()).collect()
    }

    /// Post minus pre difference per lesion.
    pub fn dp(&self) -> Vec<f64> {
        self.yp2.iter().zip(&self.yp1).map(|(b, a)| b - a).collect()
    }
}

/// Constrained parameters of the median-ADC model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianAdcParams {
    pub sdr: f64,
    pub sd0: f64,
    pub sdd: f64,
    pub mu0: f64,
    pub mud: f64,
    pub lambda: f64,
}

impl MedianAdcParams {
    pub const NAMES: [&'static str; 6] = ["sdr", "sd0", "sdd", "mu0", "mud", "lambda"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.sdr, self.sd0, self.sdd, self.mu0, self.mud, self.lambda]
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        MedianAdcParams {
            sdr: theta[0],
            sd0: theta[1],
            sdd: theta[2],
            mu0: theta[3],
            mud: theta[4],
            lambda: theta[5],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sdr > 0.0
            && self.sd0 > 0.0
            && self.sdd > 0.0
            && self.mu0.is_finite()
            && self.mud.is_finite()
            && self.lambda > 0.0
            && self.lambda < 1.0
            && self.sdr.is_finite()
            && self.sd0.is_finite()
            && self.sdd.is_finite()
    }
}

/// Prior widths: half-Cauchy scale `sd_prior` for the standard deviations and
/// normal scale `mu_prior` for the means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianAdcPriors {
    pub sd_prior: f64,
    pub mu_prior: f64,
}

impl Default for MedianAdcPriors {
    fn default() -> Self {
        MedianAdcPriors {
            sd_prior: 5.0,
            mu_prior: 10.0,
        }
    }
}

impl MedianAdcPriors {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd_prior > 0.0 && self.mu_prior > 0.0) {
            return Err(Error::Usage("prior widths must be positive".into()));
        }
        Ok(())
    }
}

/// Sum of `ln N(x_j; m, s)` from sufficient statistics, with derivatives in `m` and `s`.
#[derive(Debug, Clone, Copy)]
struct NormalSuff {
    n: f64,
    mean: f64,
    /// Σ (x_j − mean)².
    ss: f64,
}

impl NormalSuff {
    fn new(xs: &[f64]) -> Self {
        let mean = stats::mean(xs);
        NormalSuff {
            n: xs.len() as f64,
            mean,
            ss: xs.iter().map(|x| (x - mean) * (x - mean)).sum(),
        }
    }

    fn lpdf_grad(&self, m: f64, s: f64) -> (f64, f64, f64) {
        let r = self.mean - m;
        let q = self.ss + self.n * r * r;
        let inv_s2 = 1.0 / (s * s);
        let value = -0.5 * self.n * LN_2PI - self.n * s.ln() - 0.5 * q * inv_s2;
        let d_m = self.n * r * inv_s2;
        let d_s = -self.n / s + q * inv_s2 / s;
        (value, d_m, d_s)
    }
}

/// The median-ADC mixture model as an HMC target.
#[derive(Debug, Clone)]
pub struct MedianAdcModel {
    pub data: MedianAdcDataset,
    pub priors: MedianAdcPriors,
    /// When false the pre/post mixture term is dropped (baseline-only fit).
    pub include_post: bool,
    db: NormalSuff,
    mb: NormalSuff,
    dp: Vec<f64>,
}

impl MedianAdcModel {
    pub fn new(data: MedianAdcDataset, priors: MedianAdcPriors) -> Result<Self> {
        priors.validate()?;
        let db: Vec<f64> = data.yb2.iter().zip(&data.yb1).map(|(b, a)| b - a).collect();
        let mb: Vec<f64> = data.yb1.iter().zip(&data.yb2).map(|(a, b)| 0.5 * (a + b)).collect();
        let dp = data.dp();
        Ok(MedianAdcModel {
            // db has mean zero under the model, so keep raw second moments.
            db: NormalSuff {
                n: db.len() as f64,
                mean: 0.0,
                ss: db.iter().map(|d| d * d).sum(),
            },
            mb: NormalSuff::new(&mb),
            dp,
            data,
            priors,
            include_post: true,
        })
    }

    pub fn without_post(mut self) -> Self {
        self.include_post = false;
        self
    }

    /// Log-posterior (up to a constant) with its gradient in constrained space.
    pub fn log_posterior(&self, params: &MedianAdcParams) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; 6];
        let lp = self.lp_grad(&params.to_vec(), &mut grad);
        (lp, grad)
    }

    fn lp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = MedianAdcParams::from_slice(theta);
        if !p.is_valid() {
            return f64::NEG_INFINITY;
        }
        let gs = self.priors.sd_prior;
        let sm = self.priors.mu_prior;
        let mut lp = 0.0;

        for (k, x) in [p.sdr, p.sd0, p.sdd].into_iter().enumerate() {
            let (v, d) = half_cauchy_lpdf_grad(x, gs);
            lp += v;
            grad[k] += d;
        }
        for (k, x) in [(3, p.mu0), (4, p.mud)] {
            let t = normal_lpdf_grad(x, 0.0, sm);
            lp += t.value;
            grad[k] += t.d_x;
        }

        // Repeat-baseline differences and means.
        let (v, _, ds) = self.db.lpdf_grad(0.0, SQRT_2 * p.sdr);
        lp += v;
        grad[0] += ds * SQRT_2;
        let s_mb = (p.sd0 * p.sd0 + 0.5 * p.sdr * p.sdr).sqrt();
        let (v, dm, ds) = self.mb.lpdf_grad(p.mu0, s_mb);
        lp += v;
        grad[3] += dm;
        grad[1] += ds * p.sd0 / s_mb;
        grad[0] += ds * 0.5 * p.sdr / s_mb;

        if self.include_post {
            let s0 = SQRT_2 * p.sdr;
            let s1 = (p.sdd * p.sdd + 2.0 * p.sdr * p.sdr).sqrt();
            let l0 = (-p.lambda).ln_1p();
            let l1 = p.lambda.ln();
            let (mut g_sdr, mut g_sdd, mut g_mud, mut g_lam) = (0.0, 0.0, 0.0, 0.0);
            for &d in &self.dp {
                let t0 = normal_lpdf_grad(d, 0.0, s0);
                let t1 = normal_lpdf_grad(d, p.mud, s1);
                let a = l0 + t0.value;
                let b = l1 + t1.value;
                let l = log_sum_exp(a, b);
                let w0 = (a - l).exp();
                let w1 = (b - l).exp();
                lp += l;
                g_lam += -w0 / (1.0 - p.lambda) + w1 / p.lambda;
                g_sdr += w0 * t0.d_sigma * SQRT_2 + w1 * t1.d_sigma * 2.0 * p.sdr / s1;
                g_sdd += w1 * t1.d_sigma * p.sdd / s1;
                g_mud += w1 * t1.d_mu;
            }
            grad[0] += g_sdr;
            grad[2] += g_sdd;
            grad[4] += g_mud;
            grad[5] += g_lam;
        }
        lp
    }

    /// Starting point from moment estimates of the data.
    pub fn initial_params(&self) -> MedianAdcParams {
        let positive = |v: f64, fallback: f64| if v.is_finite() && v > 1e-6 { v } else { fallback };
        let sdr = positive(sigma_lsq(&self.data.baseline_pairs()).unwrap_or(f64::NAN), 0.1);
        let mb: Vec<f64> = self.data.yb1.iter().zip(&self.data.yb2).map(|(a, b)| 0.5 * (a + b)).collect();
        let mu0 = stats::mean(&mb);
        let sd0 = positive(stats::sd(&mb), sdr);
        let mud = stats::mean(&self.dp);
        let sdd = positive(stats::sd(&self.dp), sdr);
        MedianAdcParams {
            sdr,
            sd0,
            sdd,
            mu0: if mu0.is_finite() { mu0 } else { 0.0 },
            mud: if mud.is_finite() { mud } else { 0.0 },
            lambda: 0.5,
        }
    }
}

impl MixtureModel for MedianAdcModel {
    fn transform(&self) -> TransformSpec {
        TransformSpec::new()
            .with("sdr", Transform::Log)
            .with("sd0", Transform::Log)
            .with("sdd", Transform::Log)
            .with("mu0", Transform::Identity)
            .with("mud", Transform::Identity)
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
        let p = MedianAdcParams::from_slice(theta);
        let d = self.dp[lesion];
        let s1 = (p.sdd * p.sdd + 2.0 * p.sdr * p.sdr).sqrt();
        (
            (-p.lambda).ln_1p() + normal_lpdf(d, 0.0, SQRT_2 * p.sdr),
            p.lambda.ln() + normal_lpdf(d, p.mud, s1),
        )
    }

    fn lambda_index(&self) -> usize {
        5
    }
}

/// Log-posterior of the median-ADC model and its gradient in the order of
/// [`MedianAdcParams::NAMES`]. Invalid parameters give `-inf`.
pub fn median_adc_logposterior(
    params: &MedianAdcParams,
    data: &MedianAdcDataset,
    priors: &MedianAdcPriors,
) -> Result<(f64, Vec<f64>)> {
    Ok(MedianAdcModel::new(data.clone(), *priors)?.log_posterior(params))
}
