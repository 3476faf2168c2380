//! Simulation studies: Latin hypercube sweeps over generative parameters,
//! synthetic cohorts under both models, and per-fit diagnostics (bias,
//! interval coverage, R̂, and label accuracy).

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::mpsc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    derive_seed, dirichlet_rng, lognormal_rng, multinomial_rng, normal_rng, seeded_rng, CountVec, SimplexVec,
};
use crate::hmc::{summarize_draws, SamplerConfig};
use crate::models::{
    fit, sample_labels, HabitatDataset, HabitatModel, HabitatPriors, MedianAdcDataset, MedianAdcModel, MedianAdcPriors,
    MixtureModel,
};
use crate::stats;
use crate::{Error, Result};

/// One swept (or fixed) dimension of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub fixed: bool,
}

impl ParamRange {
    pub fn range(name: &str, lower: f64, upper: f64) -> Self {
        ParamRange {
            name: name.to_string(),
            lower,
            upper,
            fixed: false,
        }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        ParamRange {
            name: name.to_string(),
            lower: value,
            upper: value,
            fixed: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower <= self.upper) || (self.fixed && self.lower != self.upper) {
            return Err(Error::Usage(format!("invalid range for {}", self.name)));
        }
        Ok(())
    }
}

/// Swept ranges for the real-valued model.
pub fn median_ranges() -> Vec<ParamRange> {
    vec![
        ParamRange::range("lambda", 0.4, 0.95),
        ParamRange::range("eta", 0.6, 0.99),
        ParamRange::range("icc", 0.6, 0.99),
        ParamRange::range("mu_delta", -0.5, 2.0),
        ParamRange::fixed("mu0", 1.0),
        ParamRange::fixed("sigma", 0.05),
    ]
}

/// Swept ranges for the habitat model.
pub fn habitat_ranges() -> Vec<ParamRange> {
    vec![
        ParamRange::range("lambda", 0.4, 0.95),
        ParamRange::range("eta", 0.6, 0.99),
        ParamRange::fixed("tau", 11.54),
        ParamRange::fixed("mu_v", 6.37),
        ParamRange::fixed("sigma_v", 1.38),
    ]
}

/// Baseline and change centres of the habitat study.
pub const HABITAT_MU0: [f64; 3] = [0.1, 0.8, 0.1];
pub const HABITAT_MU1: [f64; 3] = [0.01, 0.54, 0.45];

/// `n` stratified samples: each non-fixed dimension places exactly one sample
/// in each of `n` equal-width strata, jittered uniformly within the stratum.
pub fn latin_hypercube(ranges: &[ParamRange], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Usage("latin hypercube needs n >= 1".into()));
    }
    for r in ranges {
        r.validate()?;
    }
    let mut rng = seeded_rng(seed);
    let mut combos = vec![Vec::with_capacity(ranges.len()); n];
    for r in ranges {
        if r.fixed || r.lower == r.upper {
            combos.iter_mut().for_each(|c| c.push(r.lower));
            continue;
        }
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (c, s) in combos.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            c.push(r.lower + (r.upper - r.lower) * (s as f64 + u) / n as f64);
        }
    }
    Ok(combos)
}

fn lookup(names: &[ParamRange], combo: &[f64], name: &str) -> Result<f64> {
    names
        .iter()
        .position(|r| r.name == name)
        .map(|i| combo[i])
        .ok_or_else(|| Error::Usage(format!("study ranges lack '{name}'")))
}

/// Generative parameters of the real-valued model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianTruth {
    pub lambda: f64,
    pub eta: f64,
    pub icc: f64,
    pub mu_delta: f64,
    pub mu0: f64,
    pub sigma: f64,
    pub sigma_delta: f64,
    pub sigma0: f64,
}

impl MedianTruth {
    /// Derives `σΔ = σ√(2η/(1−η))` and `σ0 = σ√(ICC/(1−ICC))`.
    pub fn new(lambda: f64, eta: f64, icc: f64, mu_delta: f64, mu0: f64, sigma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) || !(0.0..1.0).contains(&icc) {
            return Err(Error::domain(format!("eta and icc must lie in [0, 1), got {eta}, {icc}")));
        }
        Ok(MedianTruth {
            lambda,
            eta,
            icc,
            mu_delta,
            mu0,
            sigma,
            sigma_delta: sigma * (2.0 * eta / (1.0 - eta)).sqrt(),
            sigma0: sigma * (icc / (1.0 - icc)).sqrt(),
        })
    }

    pub fn from_combo(ranges: &[ParamRange], combo: &[f64]) -> Result<Self> {
        let g = |n| lookup(ranges, combo, n);
        Self::new(g("lambda")?, g("eta")?, g("icc")?, g("mu_delta")?, g("mu0")?, g("sigma")?)
    }

    /// Values the fitted parameters should recover, in model order.
    pub fn targets(&self) -> Vec<(String, f64)> {
        vec![
            ("sdr".into(), self.sigma),
            ("sd0".into(), self.sigma0),
            ("sdd".into(), self.sigma_delta),
            ("mu0".into(), self.mu0),
            ("mud".into(), self.mu_delta),
            ("lambda".into(), self.lambda),
        ]
    }
}

/// Generative parameters of the habitat model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HabitatTruth {
    pub lambda: f64,
    pub eta: f64,
    pub mu0: SimplexVec,
    pub mu1: SimplexVec,
    pub tau: f64,
    pub tau1: f64,
    pub mu_v: f64,
    pub sigma_v: f64,
}

impl HabitatTruth {
    /// Derives `τ1 = τ(1−η)/η`.
    pub fn new(lambda: f64, eta: f64, tau: f64, mu_v: f64, sigma_v: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::domain(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(HabitatTruth {
            lambda,
            eta,
            mu0: SimplexVec::new(HABITAT_MU0.to_vec())?,
            mu1: SimplexVec::new(HABITAT_MU1.to_vec())?,
            tau,
            tau1: tau * (1.0 - eta) / eta,
            mu_v,
            sigma_v,
        })
    }

    pub fn from_combo(ranges: &[ParamRange], combo: &[f64]) -> Result<Self> {
        let g = |n| lookup(ranges, combo, n);
        Self::new(g("lambda")?, g("eta")?, g("tau")?, g("mu_v")?, g("sigma_v")?)
    }

    pub fn targets(&self) -> Vec<(String, f64)> {
        let mut t = vec![("prec".to_string(), self.tau), ("conc".to_string(), self.tau1)];
        t.extend(self.mu1.iter().enumerate().map(|(i, m)| (format!("mu1[{}]", i + 1), *m)));
        t.push(("lambda".into(), self.lambda));
        t
    }
}

/// Synthetic real-valued cohort and the true change labels of its pre/post lesions.
pub fn simulate_median(truth: &MedianTruth, n_baseline: usize, n_lesions: usize, seed: u64) -> Result<(MedianAdcDataset, Vec<bool>)> {
    if n_baseline == 0 || n_lesions == 0 {
        return Err(Error::Usage("cohort sizes must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let t = truth;
    let (mut yb1, mut yb2) = (Vec::with_capacity(n_baseline), Vec::with_capacity(n_baseline));
    for _ in 0..n_baseline {
        let x0 = normal_rng(&mut rng, t.mu0, t.sigma0)?;
        yb1.push(normal_rng(&mut rng, x0, t.sigma)?);
        yb2.push(normal_rng(&mut rng, x0, t.sigma)?);
    }
    let (mut yp1, mut yp2, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n_lesions {
        let x0 = normal_rng(&mut rng, t.mu0, t.sigma0)?;
        let changed = rng.random::<f64>() < t.lambda;
        let x1 = if changed {
            normal_rng(&mut rng, x0 + t.mu_delta, t.sigma_delta)?
        } else {
            x0
        };
        yp1.push(normal_rng(&mut rng, x0, t.sigma)?);
        yp2.push(normal_rng(&mut rng, x1, t.sigma)?);
        labels.push(changed);
    }
    Ok((MedianAdcDataset::new(yb1, yb2, yp1, yp2)?, labels))
}

/// Voxel count `max(1, round(exp(N(μ_v, σ_v))))`.
pub fn voxel_count<R: Rng + ?Sized>(rng: &mut R, mu_v: f64, sigma_v: f64) -> Result<u64> {
    Ok(lognormal_rng(rng, mu_v, sigma_v)?.round().max(1.0) as u64)
}

/// Synthetic habitat cohort and the true change labels of its post lesions.
pub fn simulate_habitat(truth: &HabitatTruth, n_baseline: usize, n_lesions: usize, seed: u64) -> Result<(HabitatDataset, Vec<bool>)> {
    if n_baseline == 0 || n_lesions == 0 {
        return Err(Error::Usage("cohort sizes must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let t = truth;
    let mut yb = Vec::with_capacity(n_baseline);
    for _ in 0..n_baseline {
        let nv = voxel_count(&mut rng, t.mu_v, t.sigma_v)?;
        let x = dirichlet_rng(&mut rng, &t.mu0, t.tau)?;
        yb.push(CountVec::new(multinomial_rng(&mut rng, &x, nv)?)?);
    }
    let (mut yp, mut labels) = (Vec::with_capacity(n_lesions), Vec::with_capacity(n_lesions));
    for _ in 0..n_lesions {
        let nv = voxel_count(&mut rng, t.mu_v, t.sigma_v)?;
        let changed = rng.random::<f64>() < t.lambda;
        let x = if changed {
            dirichlet_rng(&mut rng, &t.mu1, t.tau1)?
        } else {
            dirichlet_rng(&mut rng, &t.mu0, t.tau)?
        };
        yp.push(CountVec::new(multinomial_rng(&mut rng, &x, nv)?)?);
        labels.push(changed);
    }
    Ok((HabitatDataset::new(t.mu0.clone(), yb, yp)?, labels))
}

/// Percentage bias of a posterior median, or the absolute bias when the true
/// value is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bias {
    pub value: f64,
    /// True when `value` is an absolute difference because the truth is zero.
    pub absolute: bool,
}

pub fn bias_pct(true_value: f64, posterior_median: f64) -> Bias {
    if true_value == 0.0 {
        Bias {
            value: posterior_median,
            absolute: true,
        }
    } else {
        Bias {
            value: (posterior_median - true_value) / true_value * 100.0,
            absolute: false,
        }
    }
}

/// Whether `true_value` lies in the 95% HDI (`hdi = true`) or the central
/// 95% interval of `draws`.
pub fn coverage_flag(true_value: f64, draws: &[f64], hdi: bool) -> bool {
    let s = summarize_draws(draws);
    let (lo, hi) = if hdi { s.hdi95 } else { s.ci95 };
    lo <= true_value && true_value <= hi
}

/// Percentage of covered flags.
pub fn coverage_percent(flags: &[bool]) -> f64 {
    100.0 * flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
}

/// Label-recovery accuracy. Entries are `None` when undefined for the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
}

/// Sensitivity and specificity of the rule `score > threshold` (use `0` for
/// log posterior odds, i.e. PO > 1) and the rank-sum AUC with mid-ranks for ties.
pub fn diagnostic_accuracy(labels: &[bool], scores: &[f64], threshold: f64) -> Result<Accuracy> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    let tp = labels.iter().zip(scores).filter(|(l, s)| **l && **s > threshold).count();
    let tn = labels.iter().zip(scores).filter(|(l, s)| !**l && !(**s > threshold)).count();
    Ok(Accuracy {
        sensitivity: (pos > 0).then(|| tp as f64 / pos as f64),
        specificity: (neg > 0).then(|| tn as f64 / neg as f64),
        auc: (pos > 0 && neg > 0).then(|| rank_auc(labels, scores)),
    })
}

fn rank_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = 0.5 * ((i + 1) + (j + 1)) as f64;
        for k in i..=j {
            ranks[idx[k]] = mid;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|l| **l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let rank_sum: f64 = labels.iter().zip(&ranks).filter(|(l, _)| **l).map(|(_, r)| r).sum();
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Median,
    Habitat,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(ModelKind::Median),
            "habitat" => Ok(ModelKind::Habitat),
            other => Err(Error::Usage(format!("unknown model '{other}' (use median or habitat)"))),
        }
    }
}

/// Recovery of one parameter in one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamResult {
    pub name: String,
    pub true_value: f64,
    pub median: f64,
    pub bias: Bias,
    pub covered_hdi: bool,
    pub covered_central: bool,
}

/// Diagnostics of one fit in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub combo: usize,
    pub rep: usize,
    /// Swept values of the combination, in range order.
    pub combo_values: Vec<(String, f64)>,
    pub params: Vec<ParamResult>,
    pub rhat_max: f64,
    pub accuracy: Accuracy,
    /// Wall-clock time; only recorded on request so outputs stay reproducible.
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

/// Settings of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub model: ModelKind,
    pub n_combos: usize,
    pub n_reps: usize,
    pub n_baseline: usize,
    pub n_lesions: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
    /// Overrides the model's default ranges.
    pub ranges: Option<Vec<ParamRange>>,
    pub median_priors: MedianAdcPriors,
    pub habitat_priors: HabitatPriors,
    pub record_timing: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            model: ModelKind::Median,
            n_combos: 50,
            n_reps: 10,
            n_baseline: 73,
            n_lesions: 100,
            sampler: SamplerConfig::default(),
            seed: 1,
            ranges: None,
            median_priors: MedianAdcPriors::default(),
            habitat_priors: HabitatPriors::default(),
            record_timing: false,
        }
    }
}

impl StudyConfig {
    pub fn ranges(&self) -> Vec<ParamRange> {
        self.ranges.clone().unwrap_or_else(|| match self.model {
            ModelKind::Median => median_ranges(),
            ModelKind::Habitat => habitat_ranges(),
        })
    }

    /// The Latin hypercube combinations of this study.
    pub fn combos(&self) -> Result<Vec<Vec<f64>>> {
        latin_hypercube(&self.ranges(), self.n_combos, derive_seed(self.seed, &[u64::MAX]))
    }
}

fn evaluate_fit<M: MixtureModel>(
    model: &M,
    targets: &[(String, f64)],
    labels: &[bool],
    sampler: &SamplerConfig,
    label_seed: u64,
) -> Result<(Vec<ParamResult>, f64, Accuracy)> {
    let f = fit(model, sampler)?;
    let params = targets
        .iter()
        .map(|(name, truth)| {
            let draws = f.samples.pooled(name)?;
            let s = summarize_draws(&draws);
            Ok(ParamResult {
                name: name.clone(),
                true_value: *truth,
                median: s.median,
                bias: bias_pct(*truth, s.median),
                covered_hdi: s.hdi95.0 <= *truth && *truth <= s.hdi95.1,
                covered_central: s.ci95.0 <= *truth && *truth <= s.ci95.1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let z = sample_labels(model, &f.samples, label_seed)?;
    let scores: Vec<f64> = (0..labels.len()).map(|n| z.counts(n).log_value()).collect();
    let accuracy = diagnostic_accuracy(labels, &scores, 0.0)?;
    Ok((params, f.max_rhat(), accuracy))
}

/// Simulates, fits and scores one (combo, rep) task.
pub fn run_task(config: &StudyConfig, combo_id: usize, combo: &[f64], rep: usize) -> SimResult {
    let start = Instant::now();
    let ranges = config.ranges();
    let task_seed = derive_seed(config.seed, &[combo_id as u64, rep as u64]);
    let sampler = SamplerConfig {
        seed: derive_seed(task_seed, &[2]),
        ..config.sampler
    };
    let outcome = (|| -> Result<(Vec<ParamResult>, f64, Accuracy)> {
        match config.model {
            ModelKind::Median => {
                let truth = MedianTruth::from_combo(&ranges, combo)?;
                let (data, labels) = simulate_median(&truth, config.n_baseline, config.n_lesions, derive_seed(task_seed, &[1]))?;
                let model = MedianAdcModel::new(data, config.median_priors)?;
                evaluate_fit(&model, &truth.targets(), &labels, &sampler, derive_seed(task_seed, &[3]))
            }
            ModelKind::Habitat => {
                let truth = HabitatTruth::from_combo(&ranges, combo)?;
                let (data, labels) = simulate_habitat(&truth, config.n_baseline, config.n_lesions, derive_seed(task_seed, &[1]))?;
                let model = HabitatModel::new(data, config.habitat_priors)?;
                evaluate_fit(&model, &truth.targets(), &labels, &sampler, derive_seed(task_seed, &[3]))
            }
        }
    })();
    let combo_values = ranges.iter().map(|r| r.name.clone()).zip(combo.iter().copied()).collect();
    let seconds = config.record_timing.then(|| start.elapsed().as_secs_f64());
    match outcome {
        Ok((params, rhat_max, accuracy)) => SimResult {
            combo: combo_id,
            rep,
            combo_values,
            params,
            rhat_max,
            accuracy,
            seconds,
            error: None,
        },
        Err(e) => SimResult {
            combo: combo_id,
            rep,
            combo_values,
            params: Vec::new(),
            rhat_max: f64::NAN,
            accuracy: Accuracy {
                sensitivity: None,
                specificity: None,
                auc: None,
            },
            seconds,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every (combo, rep) task in parallel and hands results to `sink` in
/// task order as soon as each one and all its predecessors have finished.
/// Individual failures are recorded in [`SimResult::error`].
pub fn run_study<F>(config: &StudyConfig, mut sink: F) -> Result<Vec<SimResult>>
where
    F: FnMut(&SimResult) -> Result<()>,
{
    if config.n_reps == 0 {
        return Err(Error::Usage("n_reps must be at least 1".into()));
    }
    config.sampler.validate()?;
    let combos = config.combos()?;
    let tasks: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|c| (0..config.n_reps).map(move |r| (c, r)))
        .collect();
    let (tx, rx) = mpsc::channel::<(usize, SimResult)>();
    let mut ordered = Vec::with_capacity(tasks.len());
    std::thread::scope(|scope| -> Result<()> {
        let tasks = &tasks;
        let combos = &combos;
        scope.spawn(move || {
            tasks.par_iter().enumerate().for_each_with(tx, |tx, (i, &(c, r))| {
                let _ = tx.send((i, run_task(config, c, &combos[c], r)));
            });
        });
        let mut pending: BTreeMap<usize, SimResult> = BTreeMap::new();
        let mut next = 0;
        for (i, res) in rx {
            pending.insert(i, res);
            while let Some(res) = pending.remove(&next) {
                sink(&res)?;
                ordered.push(res);
                next += 1;
            }
        }
        Ok(())
    })?;
    Ok(ordered)
}

/// Writes the long-format results table, one row per fitted parameter:
/// `combo,rep,param,true,median,bias_pct,covered,rhat_max,sens,spec,auc,seconds`.
pub struct ResultsWriter<W: Write> {
    inner: csv::Writer<W>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl<W: Write> ResultsWriter<W> {
    pub const HEADER: [&'static str; 12] = [
        "combo", "rep", "param", "true", "median", "bias_pct", "covered", "rhat_max", "sens", "spec", "auc", "seconds",
    ];

    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(Self::HEADER)?;
        Ok(ResultsWriter { inner })
    }

    pub fn write(&mut self, r: &SimResult) -> Result<()> {
        let common = |param: &str, t: String, m: String, b: String, cov: String| -> Vec<String> {
            vec![
                r.combo.to_string(),
                r.rep.to_string(),
                param.to_string(),
                t,
                m,
                b,
                cov,
                if r.rhat_max.is_finite() { r.rhat_max.to_string() } else { String::new() },
                opt(r.accuracy.sensitivity),
                opt(r.accuracy.specificity),
                opt(r.accuracy.auc),
                opt(r.seconds),
            ]
        };
        if r.params.is_empty() {
            self.inner
                .write_record(common("fit_failed", String::new(), String::new(), String::new(), String::new()))?;
        }
        for p in &r.params {
            self.inner.write_record(common(
                &p.name,
                p.true_value.to_string(),
                p.median.to_string(),
                p.bias.value.to_string(),
                u8::from(p.covered_hdi).to_string(),
            ))?;
        }
        self.inner.flush()?;
        Ok(())
    }
}

/// Aggregates of one combination over its repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSummary {
    pub combo: usize,
    pub combo_values: Vec<(String, f64)>,
    pub n_ok: usize,
    /// Mean bias (percent, or absolute when flagged) per parameter.
    pub mean_bias: Vec<(String, f64)>,
    pub coverage_hdi_pct: Vec<(String, f64)>,
    pub coverage_central_pct: Vec<(String, f64)>,
    pub max_rhat: f64,
    pub mean_sensitivity: Option<f64>,
    pub mean_specificity: Option<f64>,
    pub mean_auc: Option<f64>,
}

impl ComboSummary {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.combo_values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| stats::mean(&v))
}

/// Groups results by combination.
pub fn summarize_study(results: &[SimResult]) -> Vec<ComboSummary> {
    let mut by_combo: BTreeMap<usize, Vec<&SimResult>> = BTreeMap::new();
    for r in results {
        by_combo.entry(r.combo).or_default().push(r);
    }
    by_combo
        .into_iter()
        .map(|(combo, rs)| {
            let ok: Vec<&SimResult> = rs.iter().copied().filter(|r| r.error.is_none()).collect();
            let names: Vec<String> = ok.first().map_or_else(Vec::new, |r| r.params.iter().map(|p| p.name.clone()).collect());
            let per_param = |f: &dyn Fn(&ParamResult) -> f64| -> Vec<(String, f64)> {
                names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.clone(), stats::mean(&ok.iter().map(|r| f(&r.params[i])).collect::<Vec<_>>())))
                    .collect()
            };
            ComboSummary {
                combo,
                combo_values: rs[0].combo_values.clone(),
                n_ok: ok.len(),
                mean_bias: per_param(&|p| p.bias.value),
                coverage_hdi_pct: per_param(&|p| 100.0 * f64::from(u8::from(p.covered_hdi))),
                coverage_central_pct: per_param(&|p| 100.0 * f64::from(u8::from(p.covered_central))),
                max_rhat: ok.iter().map(|r| r.rhat_max).fold(f64::NAN, f64::max),
                mean_sensitivity: mean_opt(ok.iter().map(|r| r.accuracy.sensitivity)),
                mean_specificity: mean_opt(ok.iter().map(|r| r.accuracy.specificity)),
                mean_auc: mean_opt(ok.iter().map(|r| r.accuracy.auc)),
            }
        })
        .collect()
}
