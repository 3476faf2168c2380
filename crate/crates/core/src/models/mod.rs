//! Mixture models for heterogeneous post-treatment change.
//!
//! Both models marginalize a per-lesion binary label (no change `M0` versus
//! change `M1`) out of the likelihood, so HMC only samples continuous
//! parameters. Labels are recovered afterwards by [`sample_labels`] and
//! summarized per lesion as posterior odds.

mod habitat;
mod median;

pub use habitat::{habitat_logposterior, HabitatDataset, HabitatModel, HabitatParams, HabitatPriors};
pub use median::{median_adc_logposterior, MedianAdcDataset, MedianAdcModel, MedianAdcParams, MedianAdcPriors};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{categorical_rng, derive_seed, log_sum_exp, seeded_rng};
use crate::hmc::{sample, PosteriorSamples, Rhat, SamplerConfig, Summary, TransformSpec};
use crate::{Error, Result};

/// Default ceiling on posterior odds when no draw labels a lesion `M0`.
pub const PO_CAP: f64 = 80000.0;

/// R̂ above which a fit carries a convergence warning.
pub const RHAT_WARN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LesionId {
    pub patient: String,
    pub lesion: String,
}

impl LesionId {
    pub fn new(patient: impl Into<String>, lesion: impl Into<String>) -> Self {
        LesionId {
            patient: patient.into(),
            lesion: lesion.into(),
        }
    }

    /// `n` identifiers `prefix1/1, prefix2/1, …`.
    pub fn sequence(prefix: &str, n: usize) -> Vec<LesionId> {
        (1..=n).map(|i| LesionId::new(format!("{prefix}{i}"), "1")).collect()
    }
}

impl std::fmt::Display for LesionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.patient, self.lesion)
    }
}

/// A mixture model usable by [`fit`] and [`sample_labels`].
pub trait MixtureModel: Sync {
    fn transform(&self) -> TransformSpec;
    /// Log-posterior at constrained `theta`, adding its gradient into `grad`.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
    fn initial_point(&self) -> Vec<f64>;
    /// Identifiers of the post-treatment lesions.
    fn lesion_ids(&self) -> &[LesionId];
    /// `(ln(1−λ) + ln L0, ln λ + ln L1)` for one post-treatment lesion.
    fn component_lps(&self, theta: &[f64], lesion: usize) -> (f64, f64);
    fn lambda_index(&self) -> usize;
}

/// Posterior draws together with split-R̂ for every parameter.
#[derive(Debug, Clone)]
pub struct Fit {
    pub samples: PosteriorSamples,
    pub rhat: Vec<(String, Rhat)>,
}

impl Fit {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().map(|(_, r)| r.value).fold(1.0, f64::max)
    }

    pub fn has_warnings(&self) -> bool {
        !self.samples.warnings.is_empty()
    }
}

/// Runs HMC on a model and attaches R̂ diagnostics; any R̂ above
/// [`RHAT_WARN`] adds a convergence warning.
pub fn fit<M: MixtureModel>(model: &M, config: &SamplerConfig) -> Result<Fit> {
    let transform = model.transform();
    let init = model.initial_point();
    let mut samples = sample(
        |theta: &[f64], grad: &mut [f64]| model.log_density_grad(theta, grad),
        &transform,
        &init,
        config,
    )?;
    let rhat = if samples.n_chains() >= 2 && samples.n_draws() >= 4 {
        samples.rhat_all()?
    } else {
        Vec::new()
    };
    for (name, r) in &rhat {
        if r.value > RHAT_WARN || r.value.is_nan() {
            samples
                .warnings
                .push(format!("R-hat for {name} is {:.3}", r.value));
        }
    }
    Ok(Fit { samples, rhat })
}

/// Per-draw, per-lesion labels; `true` marks `M1` (change).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSamples {
    /// Indexed `[draw][lesion]`.
    pub z: Vec<Vec<bool>>,
}

impl LabelSamples {
    pub fn n_draws(&self) -> usize {
        self.z.len()
    }

    pub fn n_lesions(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }

    /// Counts of draws labelled `M1` and `M0` for one lesion.
    pub fn counts(&self, lesion: usize) -> PosteriorOdds {
        let m1 = self.z.iter().filter(|d| d[lesion]).count() as u64;
        PosteriorOdds {
            m1,
            m0: self.z.len() as u64 - m1,
            cap: PO_CAP,
        }
    }
}

/// Draws a label for every retained draw and lesion from
/// `Categorical(p0, 1 − p0)`, `p0 = exp(lp0 − lse(lp0, lp1))`.
///
/// Lesion `n` uses its own stream seeded from `(seed, n)`.
pub fn sample_labels<M: MixtureModel>(model: &M, samples: &PosteriorSamples, seed: u64) -> Result<LabelSamples> {
    let n_lesions = model.lesion_ids().len();
    let dim = model.transform().constrained_len();
    if samples.names.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: samples.names.len(),
        });
    }
    let draws: Vec<&[f64]> = samples.pooled_draws().collect();
    let columns: Vec<Vec<bool>> = (0..n_lesions)
        .into_par_iter()
        .map(|n| {
            let mut rng = seeded_rng(derive_seed(seed, &[n as u64]));
            draws
                .iter()
                .map(|theta| {
                    let (lp0, lp1) = model.component_lps(theta, n);
                    let l = log_sum_exp(lp0, lp1);
                    let p = [(lp0 - l).exp(), (lp1 - l).exp()];
                    Ok(categorical_rng(&mut rng, &p)? == 1)
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    let z = (0..draws.len())
        .map(|s| columns.iter().map(|c| c[s]).collect())
        .collect();
    Ok(LabelSamples { z })
}

/// Label counts for one lesion, from which the posterior odds follow exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOdds {
    pub m1: u64,
    pub m0: u64,
    pub cap: f64,
}

impl PosteriorOdds {
    pub fn new(m1: u64, m0: u64) -> Self {
        PosteriorOdds { m1, m0, cap: PO_CAP }
    }

    /// `m1 / m0`, or the cap when `m0 = 0`.
    pub fn value(&self) -> f64 {
        if self.m0 == 0 {
            self.cap
        } else {
            self.m1 as f64 / self.m0 as f64
        }
    }

    /// `ln` of [`PosteriorOdds::value`]; `-inf` when no draw is labelled `M1`.
    pub fn log_value(&self) -> f64 {
        self.value().ln()
    }

    /// Band from integer comparisons of the counts.
    pub fn category(&self) -> PoCategory {
        if self.m0 == 0 {
            return classify_po(self.cap);
        }
        let (m1, m0) = (self.m1 as u128, self.m0 as u128);
        if 3 * m1 <= m0 {
            PoCategory::NoChange
        } else if m1 <= 3 * m0 {
            PoCategory::Insufficient
        } else if m1 <= 10 * m0 {
            PoCategory::Moderate
        } else if m1 <= 30 * m0 {
            PoCategory::Strong
        } else {
            PoCategory::VeryStrong
        }
    }
}

/// Posterior odds of change for one lesion.
pub fn posterior_odds(labels: &LabelSamples, lesion: usize) -> f64 {
    labels.counts(lesion).value()
}

/// Five-band classification of posterior odds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoCategory {
    NoChange,
    Insufficient,
    Moderate,
    Strong,
    VeryStrong,
}

impl PoCategory {
    pub fn label(&self) -> &'static str {
        match self {
            PoCategory::NoChange => "moderate evidence of no change",
            PoCategory::Insufficient => "insufficient evidence",
            PoCategory::Moderate => "moderate evidence of significant change",
            PoCategory::Strong => "strong evidence of significant change",
            PoCategory::VeryStrong => "very strong evidence of significant change",
        }
    }
}

impl std::fmt::Display for PoCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn classify_po(po: f64) -> PoCategory {
    if 3.0 * po <= 1.0 {
        PoCategory::NoChange
    } else if po <= 3.0 {
        PoCategory::Insufficient
    } else if po <= 10.0 {
        PoCategory::Moderate
    } else if po <= 30.0 {
        PoCategory::Strong
    } else {
        PoCategory::VeryStrong
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
    pub rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSummary {
    pub patient: String,
    pub lesion: String,
    pub m1_count: u64,
    pub m0_count: u64,
    pub po: f64,
    /// `None` when no draw labels the lesion as changed.
    pub log_po: Option<f64>,
    pub category: PoCategory,
    pub category_label: String,
    /// Fraction of draws labelled `M1`.
    pub label_fraction: f64,
}

/// Plot-ready summary of a fit and its label draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub units: Option<String>,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParameterSummary>,
    pub lesions: Vec<LesionSummary>,
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn build(model_name: &str, units: Option<&str>, fit: &Fit, ids: &[LesionId], labels: Option<&LabelSamples>) -> Result<Self> {
        let s = &fit.samples;
        let parameters = s
            .names
            .iter()
            .map(|name| {
                Ok(ParameterSummary {
                    name: name.clone(),
                    summary: s.summarize(name)?,
                    rhat: fit.rhat.iter().find(|(n, _)| n == name).map(|(_, r)| r.value),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lesions = match labels {
            Some(labels) => ids
                .iter()
                .enumerate()
                .map(|(n, id)| {
                    let po = labels.counts(n);
                    let log_po = po.log_value();
                    LesionSummary {
                        patient: id.patient.clone(),
                        lesion: id.lesion.clone(),
                        m1_count: po.m1,
                        m0_count: po.m0,
                        po: po.value(),
                        log_po: log_po.is_finite().then_some(log_po),
                        category: po.category(),
                        category_label: po.category().label().to_string(),
                        label_fraction: po.m1 as f64 / (po.m1 + po.m0) as f64,
                    }
                })
                .collect(),
            None => Vec::new(),
        };
        Ok(FitSummary {
            model: model_name.to_string(),
            units: units.map(str::to_string),
            chains: s.n_chains(),
            draws_per_chain: s.n_draws(),
            parameters,
            lesions,
            warnings: s.warnings.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_odds_examples() {
        assert_eq!(PosteriorOdds::new(7500, 7500).value(), 1.0);
        assert_eq!(PosteriorOdds::new(9000, 6000).value(), 1.5);
        assert_eq!(PosteriorOdds::new(15000, 0).value(), 80000.0);
        assert_eq!(PosteriorOdds::new(15000, 0).category(), PoCategory::VeryStrong);
    }

    #[test]
    fn band_edges_from_counts() {
        assert_eq!(PosteriorOdds::new(1, 3).category(), PoCategory::NoChange);
        assert_eq!(PosteriorOdds::new(3, 1).category(), PoCategory::Insufficient);
        assert_eq!(PosteriorOdds::new(10, 1).category(), PoCategory::Moderate);
        assert_eq!(PosteriorOdds::new(30, 1).category(), PoCategory::Strong);
        assert_eq!(PosteriorOdds::new(31, 1).category(), PoCategory::VeryStrong);
        assert_eq!(PosteriorOdds::new(0, 5).category(), PoCategory::NoChange);
    }

    #[test]
    fn float_classification() {
        assert_eq!(classify_po(0.2), PoCategory::NoChange);
        assert_eq!(classify_po(5.0), PoCategory::Moderate);
        assert_eq!(classify_po(80000.0), PoCategory::VeryStrong);
        assert_eq!(classify_po(1.0 / 3.0), PoCategory::NoChange);
        assert_eq!(classify_po(3.0), PoCategory::Insufficient);
    }
}
