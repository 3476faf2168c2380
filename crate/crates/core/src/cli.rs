//! Command-line front end.
//!
//! Subcommands read the CSV layouts of [`crate::ingest`] and write plot-ready
//! CSV and JSON. Outputs depend only on the inputs, the configuration and the
//! seed, so reruns are byte-identical. Seeds resolve as: explicit flag, then
//! the `--config` file, then `HETEROBAYES_SEED`, then the built-in default.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, EffectParams, Hypothesis, RepeatabilityEstimate};
use crate::distributions::derive_seed;
use crate::hmc::{PosteriorSamples, SamplerConfig, Summary};
use crate::ingest::{self, IngestOptions, ThresholdSource, Units};
use crate::models::{
    fit, sample_labels, Fit, FitSummary, HabitatDataset, HabitatModel, HabitatPriors, LabelSamples, LesionId,
    MedianAdcDataset, MedianAdcModel, MedianAdcPriors, MixtureModel,
};
use crate::novelty::{
    self, credible_region, predictive_habitat_m0, predictive_median_differences, CredibleRegion, EstimatorConfig,
    HABITAT_PSEUDO_COUNT,
};
use crate::simharness::{self, ModelKind, ResultsWriter, StudyConfig};
use crate::{Error, Result};

/// Environment variable that replaces the default seed.
pub const SEED_ENV: &str = "HETEROBAYES_SEED";

const LABEL_STREAM: u64 = 0x1abe1;
const NOVELTY_STREAM: u64 = 0x7e57;

#[derive(Debug, Parser)]
#[command(name = "heterobayes", version, about = "Bayesian repeatability and treatment-response analysis of imaging biomarkers")]
pub struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON file of default settings; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form repeatability statistics and Bayes factors.
    #[command(subcommand)]
    Analytic(AnalyticCommand),
    /// Fit the real-valued (median ADC) mixture model.
    FitMedian(FitMedianArgs),
    /// Fit the Dirichlet-multinomial habitat mixture model.
    FitHabitat(FitHabitatArgs),
    /// Posterior-predictive anomaly detection from a completed fit.
    Novelty(NoveltyArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Refit across a grid of prior widths, with and without post-treatment data.
    Sensitivity(SensitivityArgs),
    /// Convert per-voxel ADC values into habitat counts.
    HabitatExtract(HabitatExtractArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HypothesisArg {
    M0,
    M1,
}

#[derive(Debug, Subcommand)]
pub enum AnalyticCommand {
    /// Repeatability SD, ICC, CoV and RC from the baseline pairs of a median.csv.
    Repeatability {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        units: Option<String>,
    },
    /// Intraclass correlation σ0²/(σ0²+σ²).
    Icc {
        #[arg(long)]
        sigma0: f64,
        #[arg(long)]
        sigma: f64,
    },
    /// Coefficient of variation σ/μ0.
    #[command(allow_negative_numbers = true)]
    Cov {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        mu0: f64,
    },
    /// Repeatability coefficient 1.96·√2·σ.
    Rc {
        #[arg(long)]
        sigma: f64,
    },
    /// Predictive mean and SD of a repeat measurement given a first one.
    #[command(allow_negative_numbers = true)]
    Predictive {
        #[arg(long)]
        y0: f64,
        #[arg(long)]
        mu0: f64,
        #[arg(long)]
        sigma0: f64,
        #[arg(long)]
        sigma: f64,
    },
    /// Two-sided p-value of a change `d` against the baseline pairs of a median.csv.
    #[command(allow_negative_numbers = true)]
    Pvalue {
        #[arg(long)]
        d: f64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        units: Option<String>,
    },
    /// Log Bayes factor of change for an observed difference.
    #[command(allow_negative_numbers = true)]
    Bf {
        #[arg(long)]
        dy: f64,
        #[arg(long)]
        mu_delta: f64,
        /// Response heterogeneity σΔ²/(σΔ²+2σ²); alternative to --sigma-delta.
        #[arg(long, conflicts_with = "sigma_delta")]
        eta: Option<f64>,
        #[arg(long)]
        sigma_delta: Option<f64>,
        #[arg(long)]
        sigma: f64,
    },
    /// Expected log Bayes factor under M0 or M1.
    #[command(allow_negative_numbers = true)]
    ExpectedBf {
        #[arg(long)]
        eta: f64,
        /// Standardized mean change μΔ/(√2σ).
        #[arg(long)]
        xi: f64,
        #[arg(long, value_enum)]
        under: HypothesisArg,
    },
    /// Evidence category of a Bayes factor.
    BfInterpret {
        #[arg(long)]
        bf: f64,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct SamplerArgs {
    /// Number of chains [default: 3].
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Warmup iterations per chain [default: 500].
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Base seed; chain c uses seed + c.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leapfrog steps are drawn from 1..=N [default: 10].
    #[arg(long)]
    pub max_leapfrog: Option<usize>,
    /// Target acceptance rate for step-size adaptation.
    #[arg(long)]
    pub target_accept: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitMedianArgs {
    /// median.csv input.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Units of the input values: 1e-3mm2/s (default) or mm2/s.
    #[arg(long)]
    pub units: Option<String>,
    /// Take natural logs after rescaling.
    #[arg(long)]
    pub log_transform: bool,
    /// Half-Cauchy scale γσ of the standard deviations.
    #[arg(long)]
    pub sd_prior: Option<f64>,
    /// Normal scale σμ of the means.
    #[arg(long)]
    pub mu_prior: Option<f64>,
    /// Exit with status 3 on convergence warnings.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitHabitatArgs {
    /// habitat.csv input.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Half-Cauchy scale γτ of the precisions.
    #[arg(long)]
    pub prec_prior: Option<f64>,
    /// Exit with status 3 on convergence warnings.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Kde,
    Gmm,
    Dirichlet,
}

#[derive(Debug, Clone, Args)]
pub struct NoveltyArgs {
    /// Output directory of a fit-median or fit-habitat run.
    #[arg(long)]
    pub fit: PathBuf,
    /// Input file; defaults to the one recorded by the fit.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory; defaults to the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tail mass outside the credible region [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Restrict to lesions given as PATIENT:LESION (repeatable).
    #[arg(long = "lesion")]
    pub lesions: Vec<String>,
    /// Density estimator [default: kde for median fits, dirichlet for habitat fits].
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// KDE bandwidth; Silverman rule when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Mixture components.
    #[arg(long)]
    pub components: Option<usize>,
    /// Seed for predictive draws and mixture initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rays used to trace simplex boundaries.
    #[arg(long, default_value_t = 120)]
    pub angles: usize,
    /// Proceed even if the fit reported convergence warnings.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Study configuration JSON (ranges, cohort sizes, sampler); flags override it.
    #[arg(long)]
    pub study: Option<PathBuf>,
    /// median or habitat.
    #[arg(long)]
    pub model: Option<String>,
    /// Parameter combinations drawn by Latin hypercube sampling.
    #[arg(long)]
    pub combos: Option<usize>,
    /// Repetitions per combination.
    #[arg(long)]
    pub reps: Option<usize>,
    /// 500 combinations × 20 repetitions.
    #[arg(long)]
    pub full: bool,
    /// Baseline lesions per simulated cohort.
    #[arg(long)]
    pub n_baseline: Option<usize>,
    /// Post-treatment lesions per simulated cohort.
    #[arg(long)]
    pub n_lesions: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Fill the `seconds` column (makes outputs run-dependent).
    #[arg(long)]
    pub record_timing: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    /// median or habitat.
    #[arg(long, default_value = "median")]
    pub model: String,
    /// median.csv or habitat.csv input.
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Units of the input values: 1e-3mm2/s (default) or mm2/s.
    #[arg(long)]
    pub units: Option<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 10.0])]
    pub mu_priors: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 5.0, 50.0])]
    pub sd_priors: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 50.0, 500.0])]
    pub prec_priors: Vec<f64>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct HabitatExtractArgs {
    /// voxels.csv input.
    #[arg(long)]
    pub input: PathBuf,
    /// habitat.csv output.
    #[arg(long)]
    pub out: PathBuf,
    /// Units of the voxel values: 1e-3mm2/s (default) or mm2/s.
    #[arg(long)]
    pub units: Option<String>,
    /// Take thresholds from both baseline scans instead of the first.
    #[arg(long)]
    pub pooled_thresholds: bool,
    /// Optional CSV of per-lesion thresholds.
    #[arg(long)]
    pub thresholds_out: Option<PathBuf>,
}

/// Settings accepted through `--config`. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub warmup: Option<usize>,
    pub seed: Option<u64>,
    pub max_leapfrog_steps: Option<usize>,
    pub target_accept: Option<f64>,
    pub mu_prior: Option<f64>,
    pub sd_prior: Option<f64>,
    pub prec_prior: Option<f64>,
    pub alpha: Option<f64>,
    pub units: Option<String>,
    pub n_combos: Option<usize>,
    pub n_reps: Option<usize>,
    pub n_baseline: Option<usize>,
    pub n_lesions: Option<usize>,
}

impl RunConfig {
    /// Field-wise `self`, falling back to `other`.
    pub fn or(&self, other: &RunConfig) -> RunConfig {
        RunConfig {
            chains: self.chains.or(other.chains),
            iterations: self.iterations.or(other.iterations),
            warmup: self.warmup.or(other.warmup),
            seed: self.seed.or(other.seed),
            max_leapfrog_steps: self.max_leapfrog_steps.or(other.max_leapfrog_steps),
            target_accept: self.target_accept.or(other.target_accept),
            mu_prior: self.mu_prior.or(other.mu_prior),
            sd_prior: self.sd_prior.or(other.sd_prior),
            prec_prior: self.prec_prior.or(other.prec_prior),
            alpha: self.alpha.or(other.alpha),
            units: self.units.clone().or_else(|| other.units.clone()),
            n_combos: self.n_combos.or(other.n_combos),
            n_reps: self.n_reps.or(other.n_reps),
            n_baseline: self.n_baseline.or(other.n_baseline),
            n_lesions: self.n_lesions.or(other.n_lesions),
        }
    }

    /// Every setting of a study file, as explicit values.
    pub fn from_study(study: &StudyConfig) -> RunConfig {
        RunConfig {
            chains: Some(study.sampler.chains),
            iterations: Some(study.sampler.iterations),
            warmup: Some(study.sampler.warmup),
            seed: Some(study.seed),
            max_leapfrog_steps: Some(study.sampler.max_leapfrog_steps),
            target_accept: Some(study.sampler.target_accept),
            mu_prior: Some(study.median_priors.mu_prior),
            sd_prior: Some(study.median_priors.sd_prior),
            prec_prior: Some(study.habitat_priors.prec_prior),
            alpha: None,
            units: None,
            n_combos: Some(study.n_combos),
            n_reps: Some(study.n_reps),
            n_baseline: Some(study.n_baseline),
            n_lesions: Some(study.n_lesions),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Combines flags, config file, environment and defaults into a sampler configuration.
pub fn resolve_sampler(args: &SamplerArgs, cfg: &RunConfig) -> Result<SamplerConfig> {
    let d = SamplerConfig::default();
    let seed = match args.seed.or(cfg.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(d.seed),
    };
    let s = SamplerConfig {
        chains: args.chains.or(cfg.chains).unwrap_or(d.chains),
        iterations: args.iterations.or(cfg.iterations).unwrap_or(d.iterations),
        warmup: args.warmup.or(cfg.warmup).unwrap_or(d.warmup),
        target_accept: args.target_accept.or(cfg.target_accept).unwrap_or(d.target_accept),
        max_leapfrog_steps: args.max_leapfrog.or(cfg.max_leapfrog_steps).unwrap_or(d.max_leapfrog_steps),
        seed,
    };
    s.validate()?;
    Ok(s)
}

fn resolve_units(flag: &Option<String>, cfg: &RunConfig) -> Result<Units> {
    flag.as_ref().or(cfg.units.as_ref()).map_or(Ok(Units::default()), |u| u.parse())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Usage(format!("{name} must be positive, got {v}")))
    }
}

/// Parses arguments, runs the command and maps errors to exit codes
/// (0 success, 1 usage, 2 data, 3 numerical failure).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Executes a parsed command, writing any report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Usage(e.to_string()))?;
    let command = match cli.command {
        Command::Analytic(c) => return cmd_analytic(c, &cfg, out),
        other => other,
    };
    pool.install(|| match command {
        Command::Analytic(_) => unreachable!("handled above"),
        Command::FitMedian(a) => cmd_fit_median(&a, &cfg),
        Command::FitHabitat(a) => cmd_fit_habitat(&a, &cfg),
        Command::Novelty(a) => cmd_novelty(&a, &cfg),
        Command::Simulate(a) => cmd_simulate(&a, &cfg),
        Command::Sensitivity(a) => cmd_sensitivity(&a, &cfg),
        Command::HabitatExtract(a) => cmd_habitat_extract(&a, &cfg),
    })
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Runs an `analytic` subcommand.
pub fn cmd_analytic(cmd: AnalyticCommand, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    use serde_json::json;
    let report = match cmd {
        AnalyticCommand::Repeatability { input, units } => {
            let data = ingest::load_median_csv(&input, IngestOptions { units: resolve_units(&units, cfg)?, log_transform: false })?;
            let est = RepeatabilityEstimate::from_pairs(&data.baseline_pairs(), None, None)?;
            serde_json::to_value(est)?
        }
        AnalyticCommand::Icc { sigma0, sigma } => json!({ "icc": analytic::icc(sigma0, sigma)? }),
        AnalyticCommand::Cov { sigma, mu0 } => json!({ "cov": analytic::cov(sigma, mu0)? }),
        AnalyticCommand::Rc { sigma } => json!({ "rc": analytic::rc(positive("sigma", sigma)?) }),
        AnalyticCommand::Predictive { y0, mu0, sigma0, sigma } => {
            let (mean, sd) = analytic::conditional_predictive_m0(y0, mu0, sigma0, sigma)?;
            json!({ "mean": mean, "sd": sd })
        }
        AnalyticCommand::Pvalue { d, input, units } => {
            let data = ingest::load_median_csv(&input, IngestOptions { units: resolve_units(&units, cfg)?, log_transform: false })?;
            json!({ "p_value": analytic::pvalue_change(d, &data.baseline_pairs())? })
        }
        AnalyticCommand::Bf { dy, mu_delta, eta, sigma_delta, sigma } => {
            let effect = match (eta, sigma_delta) {
                (Some(eta), None) => EffectParams::from_eta(mu_delta, eta, sigma)?,
                (None, Some(sd)) => EffectParams::new(mu_delta, sd, sigma)?,
                _ => return Err(Error::Usage("give exactly one of --eta and --sigma-delta".into())),
            };
            let log_bf = analytic::log_bf10(dy, &effect)?;
            let evidence = analytic::interpret_bf(log_bf.exp())?;
            json!({ "log_bf10": log_bf, "bf10": log_bf.exp(), "evidence": evidence.label() })
        }
        AnalyticCommand::ExpectedBf { eta, xi, under } => {
            let h = match under {
                HypothesisArg::M0 => Hypothesis::M0,
                HypothesisArg::M1 => Hypothesis::M1,
            };
            json!({ "expected_log_bf10": analytic::expected_log_bf(eta, xi, h)? })
        }
        AnalyticCommand::BfInterpret { bf } => {
            json!({ "bf10": bf, "evidence": analytic::interpret_bf(bf)?.label() })
        }
    };
    print_json(out, &report)
}

/// What a fit directory records for later `novelty` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: ModelKind,
    pub input: PathBuf,
    pub units: Units,
    pub log_transform: bool,
    pub sampler: SamplerConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_priors: Option<MedianAdcPriors>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub habitat_priors: Option<HabitatPriors>,
}

fn write_rhat_csv(path: &Path, fit: &Fit) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["param", "rhat", "degenerate"])?;
    for (name, r) in &fit.rhat {
        w.write_record([name.clone(), r.value.to_string(), r.degenerate.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_fit_outputs(dir: &Path, summary: &FitSummary, fit: &Fit, record: &FitRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("samples.csv"))?);
    fit.samples.write_csv(&mut w)?;
    w.flush()?;
    write_json(&dir.join("summary.json"), summary)?;
    write_rhat_csv(&dir.join("rhat.csv"), fit)?;
    write_json(&dir.join("run.json"), record)
}

fn finish_fit(fit: &Fit, strict: bool) -> Result<()> {
    for w in &fit.samples.warnings {
        eprintln!("warning: {w}");
    }
    if strict && fit.has_warnings() {
        return Err(Error::Convergence(fit.samples.warnings.join("; ")));
    }
    Ok(())
}

fn fit_and_label<M: MixtureModel>(model: &M, sampler: &SamplerConfig) -> Result<(Fit, LabelSamples)> {
    let f = fit(model, sampler)?;
    let labels = sample_labels(model, &f.samples, derive_seed(sampler.seed, &[LABEL_STREAM]))?;
    Ok((f, labels))
}

fn median_priors(sd: Option<f64>, mu: Option<f64>, cfg: &RunConfig) -> Result<MedianAdcPriors> {
    let d = MedianAdcPriors::default();
    let p = MedianAdcPriors {
        sd_prior: sd.or(cfg.sd_prior).unwrap_or(d.sd_prior),
        mu_prior: mu.or(cfg.mu_prior).unwrap_or(d.mu_prior),
    };
    p.validate()?;
    Ok(p)
}

fn habitat_priors(prec: Option<f64>, cfg: &RunConfig) -> Result<HabitatPriors> {
    let prec_prior = positive("prec_prior", prec.or(cfg.prec_prior).unwrap_or(HabitatPriors::default().prec_prior))?;
    Ok(HabitatPriors { prec_prior })
}

pub fn cmd_fit_median(a: &FitMedianArgs, cfg: &RunConfig) -> Result<()> {
    let units = resolve_units(&a.units, cfg)?;
    let data = ingest::load_median_csv(&a.input, IngestOptions { units, log_transform: a.log_transform })?;
    let priors = median_priors(a.sd_prior, a.mu_prior, cfg)?;
    let sampler = resolve_sampler(&a.sampler, cfg)?;
    let ids = data.post_ids.clone();
    let model = MedianAdcModel::new(data, priors)?;
    let (f, labels) = fit_and_label(&model, &sampler)?;
    let unit_label = if a.log_transform { "log(1e-3 mm^2/s)" } else { Units::INTERNAL_LABEL };
    let summary = FitSummary::build("median", Some(unit_label), &f, &ids, Some(&labels))?;
    let record = FitRecord {
        model: ModelKind::Median,
        input: a.input.clone(),
        units,
        log_transform: a.log_transform,
        sampler,
        median_priors: Some(priors),
        habitat_priors: None,
    };
    write_fit_outputs(&a.out, &summary, &f, &record)?;
    finish_fit(&f, a.strict)
}

pub fn cmd_fit_habitat(a: &FitHabitatArgs, cfg: &RunConfig) -> Result<()> {
    let data = ingest::load_habitat_csv(&a.input)?;
    let priors = habitat_priors(a.prec_prior, cfg)?;
    let sampler = resolve_sampler(&a.sampler, cfg)?;
    let model = HabitatModel::new(data.clone(), priors)?;
    let (f, labels) = fit_and_label(&model, &sampler)?;
    let summary = FitSummary::build("habitat", None, &f, &data.post_ids, Some(&labels))?;
    let record = FitRecord {
        model: ModelKind::Habitat,
        input: a.input.clone(),
        units: Units::default(),
        log_transform: false,
        sampler,
        median_priors: None,
        habitat_priors: Some(priors),
    };
    write_fit_outputs(&a.out, &summary, &f, &record)?;
    write_barycentric_csv(&a.out.join("barycentric.csv"), &data, &summary)?;
    finish_fit(&f, a.strict)
}

/// `patient,lesion,x0_x,x0_y,x1_x,x1_y,po,category`: the baseline centre `μ0`
/// and the observed post-treatment proportions of each lesion in the plane.
fn write_barycentric_csv(path: &Path, data: &HabitatDataset, summary: &FitSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["patient", "lesion", "x0_x", "x0_y", "x1_x", "x1_y", "po", "category"])?;
    let (x0x, x0y) = ingest::barycentric(&data.mu0)?;
    for (y, l) in data.yp.iter().zip(&summary.lesions) {
        let (x1x, x1y) = ingest::barycentric(&y.smoothed_proportions(0.0))?;
        w.write_record([
            l.patient.clone(),
            l.lesion.clone(),
            x0x.to_string(),
            x0y.to_string(),
            x1x.to_string(),
            x1y.to_string(),
            l.po.to_string(),
            l.category_label.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn select_lesions(ids: &[LesionId], wanted: &[String]) -> Result<Vec<usize>> {
    if wanted.is_empty() {
        return Ok((0..ids.len()).collect());
    }
    wanted
        .iter()
        .map(|w| {
            let (p, l) = w
                .split_once(':')
                .ok_or_else(|| Error::Usage(format!("lesion '{w}' must be given as PATIENT:LESION")))?;
            ids.iter()
                .position(|id| id.patient == p && id.lesion == l)
                .ok_or_else(|| Error::Usage(format!("lesion '{w}' is not a post-treatment lesion of the input")))
        })
        .collect()
}

fn estimator_config(a: &NoveltyArgs, default: EstimatorArg, seed: u64) -> EstimatorConfig {
    match a.estimator.unwrap_or(default) {
        EstimatorArg::Kde => EstimatorConfig::GaussianKde { bandwidth: a.bandwidth },
        EstimatorArg::Gmm => EstimatorConfig::GaussianMixture {
            components: a.components.unwrap_or(3),
            seed,
        },
        EstimatorArg::Dirichlet => match EstimatorConfig::dirichlet_default(seed) {
            EstimatorConfig::DirichletMixture { components, seed, max_iter, tol } => EstimatorConfig::DirichletMixture {
                components: a.components.unwrap_or(components),
                seed,
                max_iter,
                tol,
            },
            other => other,
        },
    }
}

/// Summary of one credible region, without the density itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub patient: Option<String>,
    pub lesion: Option<String>,
    pub mode: Vec<f64>,
    pub mode_density: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub estimator: EstimatorConfig,
}

fn region_report(id: Option<&LesionId>, r: &CredibleRegion, estimator: EstimatorConfig) -> RegionReport {
    RegionReport {
        patient: id.map(|i| i.patient.clone()),
        lesion: id.map(|i| i.lesion.clone()),
        mode: r.mode.clone(),
        mode_density: r.mode_density,
        threshold: r.threshold,
        alpha: r.alpha,
        estimator,
    }
}

pub fn cmd_novelty(a: &NoveltyArgs, cfg: &RunConfig) -> Result<()> {
    let record_path = a.fit.join("run.json");
    let record: FitRecord = serde_json::from_str(&fs::read_to_string(&record_path).map_err(|e| {
        Error::Usage(format!("{} is not a fit directory ({e})", a.fit.display()))
    })?)?;
    let samples = PosteriorSamples::read_csv(File::open(a.fit.join("samples.csv"))?)?;
    let summary: FitSummary = serde_json::from_str(&fs::read_to_string(a.fit.join("summary.json"))?)?;
    if !summary.warnings.is_empty() && !a.force {
        return Err(Error::Convergence(format!(
            "the fit reported warnings ({}); rerun with --force to proceed",
            summary.warnings.join("; ")
        )));
    }
    let alpha = a.alpha.or(cfg.alpha).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let seed = a.seed.unwrap_or(record.sampler.seed);
    let input = a.input.clone().unwrap_or_else(|| record.input.clone());
    let out = a.out.clone().unwrap_or_else(|| a.fit.clone());
    fs::create_dir_all(&out)?;
    match record.model {
        ModelKind::Median => {
            let data = ingest::load_median_csv(&input, IngestOptions { units: record.units, log_transform: record.log_transform })?;
            novelty_median(a, &data, &samples, alpha, seed, &out)
        }
        ModelKind::Habitat => {
            let data = ingest::load_habitat_csv(&input)?;
            novelty_habitat(a, &data, &samples, alpha, seed, &out)
        }
    }
}

fn novelty_median(a: &NoveltyArgs, data: &MedianAdcDataset, samples: &PosteriorSamples, alpha: f64, seed: u64, out: &Path) -> Result<()> {
    let lesions = select_lesions(&data.post_ids, &a.lesions)?;
    let diffs = predictive_median_differences(samples, derive_seed(seed, &[NOVELTY_STREAM]))?;
    let spread = diffs.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let estimator = estimator_config(a, EstimatorArg::Kde, derive_seed(seed, &[NOVELTY_STREAM, 1]));
    let region = credible_region(diffs.into_iter().map(|d| vec![d]).collect(), alpha, &estimator)?;
    let (lo, hi) = novelty::interval_boundary(&region, 4.0 * spread + 1.0)?;

    let mut b = csv::Writer::from_path(out.join("boundary.csv"))?;
    b.write_record(["lower", "upper", "mode", "threshold"])?;
    b.write_record([lo.to_string(), hi.to_string(), region.mode[0].to_string(), region.threshold.to_string()])?;
    b.flush()?;

    let mut w = csv::Writer::from_path(out.join("anomalies.csv"))?;
    w.write_record(["patient", "lesion", "pre", "post", "difference", "lower", "upper", "kernel_distance", "threshold", "anomaly"])?;
    for &n in &lesions {
        let id = &data.post_ids[n];
        let d = data.yp2[n] - data.yp1[n];
        w.write_record([
            id.patient.clone(),
            id.lesion.clone(),
            data.yp1[n].to_string(),
            data.yp2[n].to_string(),
            d.to_string(),
            (data.yp1[n] + lo).to_string(),
            (data.yp1[n] + hi).to_string(),
            region.kernel_distance(&[d]).to_string(),
            region.threshold.to_string(),
            u8::from(region.is_anomaly(&[d])).to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&out.join("region.json"), &vec![region_report(None, &region, estimator)])
}

fn novelty_habitat(a: &NoveltyArgs, data: &HabitatDataset, samples: &PosteriorSamples, alpha: f64, seed: u64, out: &Path) -> Result<()> {
    if data.k() != 3 {
        return Err(Error::data("habitat novelty output needs K = 3"));
    }
    let lesions = select_lesions(&data.post_ids, &a.lesions)?;
    let regions = lesions
        .par_iter()
        .map(|&n| {
            let pred = predictive_habitat_m0(samples, data, n, derive_seed(seed, &[NOVELTY_STREAM, n as u64]))?;
            let estimator = estimator_config(a, EstimatorArg::Dirichlet, derive_seed(seed, &[NOVELTY_STREAM, n as u64, 1]));
            let region = credible_region(pred.to_points(HABITAT_PSEUDO_COUNT), alpha, &estimator)?;
            let boundary = novelty::boundary_polyline(&region, a.angles)?;
            Ok((region, estimator, boundary))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut b = csv::Writer::from_path(out.join("boundary.csv"))?;
    b.write_record(["patient", "lesion", "vertex", "x", "y", "p1", "p2", "p3"])?;
    let mut w = csv::Writer::from_path(out.join("anomalies.csv"))?;
    w.write_record(["patient", "lesion", "p1", "p2", "p3", "x", "y", "kernel_distance", "threshold", "anomaly"])?;
    let mut reports = Vec::with_capacity(lesions.len());
    for (&n, (region, estimator, boundary)) in lesions.iter().zip(&regions) {
        let id = &data.post_ids[n];
        for (v, p) in boundary.iter().enumerate() {
            let s = p.simplex.clone().unwrap_or_default();
            let mut row = vec![id.patient.clone(), id.lesion.clone(), v.to_string(), p.x.to_string(), p.y.to_string()];
            row.extend(s.iter().map(|c| c.to_string()));
            b.write_record(&row)?;
        }
        let y = data.yp[n].smoothed_proportions(HABITAT_PSEUDO_COUNT);
        let (x, yy) = ingest::barycentric(&y)?;
        let mut row = vec![id.patient.clone(), id.lesion.clone()];
        row.extend(y.iter().map(|c| c.to_string()));
        row.extend([
            x.to_string(),
            yy.to_string(),
            region.kernel_distance(&y).to_string(),
            region.threshold.to_string(),
            u8::from(region.is_anomaly(&y)).to_string(),
        ]);
        w.write_record(&row)?;
        reports.push(region_report(Some(id), region, *estimator));
    }
    b.flush()?;
    w.flush()?;
    write_json(&out.join("region.json"), &reports)
}

pub fn cmd_simulate(a: &SimulateArgs, cfg: &RunConfig) -> Result<()> {
    let (base, cfg) = match &a.study {
        Some(p) => {
            let study: StudyConfig = serde_json::from_str(&fs::read_to_string(p)?)
                .map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?;
            let merged = cfg.or(&RunConfig::from_study(&study));
            (study, merged)
        }
        None => (StudyConfig::default(), cfg.clone()),
    };
    let model = match &a.model {
        Some(m) => m.parse()?,
        None => base.model,
    };
    let sampler = resolve_sampler(&a.sampler, &cfg)?;
    let config = StudyConfig {
        model,
        n_combos: a.combos.or(a.full.then_some(500)).or(cfg.n_combos).unwrap_or(base.n_combos),
        n_reps: a.reps.or(a.full.then_some(20)).or(cfg.n_reps).unwrap_or(base.n_reps),
        n_baseline: a.n_baseline.or(cfg.n_baseline).unwrap_or(base.n_baseline),
        n_lesions: a.n_lesions.or(cfg.n_lesions).unwrap_or(base.n_lesions),
        seed: sampler.seed,
        sampler,
        median_priors: median_priors(None, None, &cfg)?,
        habitat_priors: habitat_priors(None, &cfg)?,
        record_timing: a.record_timing || base.record_timing,
        ranges: base.ranges.clone(),
    };
    fs::create_dir_all(&a.out)?;
    let mut writer = ResultsWriter::new(BufWriter::new(File::create(a.out.join("results.csv"))?))?;
    let results = simharness::run_study(&config, |r| {
        if let Some(e) = &r.error {
            eprintln!("warning: combo {} rep {} failed: {e}", r.combo, r.rep);
        }
        writer.write(r)
    })?;
    write_json(&a.out.join("config.json"), &config)?;
    write_json(&a.out.join("summary.json"), &simharness::summarize_study(&results))
}

/// One grid point of a prior-sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub mu_prior: Option<f64>,
    pub sd_prior: Option<f64>,
    pub prec_prior: Option<f64>,
    pub include_post: bool,
    pub params: Vec<(String, Summary)>,
    pub max_rhat: f64,
}

fn sensitivity_row<M: MixtureModel>(model: &M, names: &[&str], sampler: &SamplerConfig) -> Result<(Vec<(String, Summary)>, f64)> {
    let f = fit(model, sampler)?;
    let params = names
        .iter()
        .map(|n| Ok((n.to_string(), f.samples.summarize(n)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((params, f.max_rhat()))
}

/// Refits the median model over `mu_priors × sd_priors`, each with and
/// without the post-treatment lesions, reporting σ, σ0 and μ0. Every fit
/// uses the same sampler seed.
pub fn median_prior_sensitivity(
    data: &MedianAdcDataset,
    mu_priors: &[f64],
    sd_priors: &[f64],
    sampler: &SamplerConfig,
) -> Result<Vec<SensitivityRow>> {
    let grid: Vec<(f64, f64, bool)> = mu_priors
        .iter()
        .flat_map(|&m| sd_priors.iter().flat_map(move |&s| [(m, s, true), (m, s, false)]))
        .collect();
    grid.par_iter()
        .map(|&(mu_prior, sd_prior, include_post)| {
            let priors = MedianAdcPriors { sd_prior, mu_prior };
            let mut model = MedianAdcModel::new(data.clone(), priors)?;
            if !include_post {
                model = model.without_post();
            }
            let (params, max_rhat) = sensitivity_row(&model, &["sdr", "sd0", "mu0"], sampler)?;
            Ok(SensitivityRow {
                mu_prior: Some(mu_prior),
                sd_prior: Some(sd_prior),
                prec_prior: None,
                include_post,
                params,
                max_rhat,
            })
        })
        .collect()
}

/// Refits the habitat model over `prec_priors`, with and without the
/// post-treatment lesions, reporting τ.
pub fn habitat_prior_sensitivity(data: &HabitatDataset, prec_priors: &[f64], sampler: &SamplerConfig) -> Result<Vec<SensitivityRow>> {
    let grid: Vec<(f64, bool)> = prec_priors.iter().flat_map(|&p| [(p, true), (p, false)]).collect();
    grid.par_iter()
        .map(|&(prec_prior, include_post)| {
            let mut model = HabitatModel::new(data.clone(), HabitatPriors { prec_prior: positive("prec_prior", prec_prior)? })?;
            if !include_post {
                model = model.without_post();
            }
            let (params, max_rhat) = sensitivity_row(&model, &["prec"], sampler)?;
            Ok(SensitivityRow {
                mu_prior: None,
                sd_prior: None,
                prec_prior: Some(prec_prior),
                include_post,
                params,
                max_rhat,
            })
        })
        .collect()
}

/// Writes sweep rows, one per grid point and data subset.
pub fn write_sensitivity_csv<W: Write>(rows: &[SensitivityRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = rows.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header: Vec<String> = ["mu_prior", "sd_prior", "prec_prior", "include_post"].map(String::from).to_vec();
    for (name, _) in &first.params {
        for stat in ["median", "mean", "sd", "hdi_lo", "hdi_hi"] {
            header.push(format!("{name}_{stat}"));
        }
    }
    header.push("max_rhat".into());
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in rows {
        let mut rec = vec![opt(r.mu_prior), opt(r.sd_prior), opt(r.prec_prior), r.include_post.to_string()];
        for (_, s) in &r.params {
            rec.extend([s.median, s.mean, s.sd, s.hdi95.0, s.hdi95.1].map(|v| v.to_string()));
        }
        rec.push(r.max_rhat.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sensitivity(a: &SensitivityArgs, cfg: &RunConfig) -> Result<()> {
    let sampler = resolve_sampler(&a.sampler, cfg)?;
    let rows = match a.model.parse::<ModelKind>()? {
        ModelKind::Median => {
            for v in a.mu_priors.iter().chain(&a.sd_priors) {
                positive("prior width", *v)?;
            }
            let data = ingest::load_median_csv(&a.input, IngestOptions { units: resolve_units(&a.units, cfg)?, log_transform: false })?;
            median_prior_sensitivity(&data, &a.mu_priors, &a.sd_priors, &sampler)?
        }
        ModelKind::Habitat => {
            let data = ingest::load_habitat_csv(&a.input)?;
            habitat_prior_sensitivity(&data, &a.prec_priors, &sampler)?
        }
    };
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_sensitivity_csv(&rows, BufWriter::new(File::create(&a.out)?))
}

pub fn cmd_habitat_extract(a: &HabitatExtractArgs, cfg: &RunConfig) -> Result<()> {
    let records = ingest::load_voxels_csv(&a.input, resolve_units(&a.units, cfg)?)?;
    let source = if a.pooled_thresholds {
        ThresholdSource::PooledBaselines
    } else {
        ThresholdSource::FirstBaseline
    };
    let extracted = ingest::extract_habitats(&records, source)?;
    if let Some(path) = &a.thresholds_out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["patient", "lesion", "low", "high", "degenerate"])?;
        for (id, t) in &extracted.thresholds {
            w.write_record([id.patient.clone(), id.lesion.clone(), t.low.to_string(), t.high.to_string(), t.degenerate.to_string()])?;
        }
        w.flush()?;
    }
    let data = extracted.into_dataset()?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    ingest::write_habitat_csv(&data, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analytic_json(args: &[&str]) -> serde_json::Value {
        let mut argv = vec!["heterobayes", "analytic"];
        argv.extend_from_slice(args);
        let cli = Cli::try_parse_from(argv).unwrap();
        let mut buf = Vec::new();
        run(cli, &mut buf).unwrap();
        serde_json::from_slice(&buf).unwrap()
    }

    #[test]
    fn rc_command() {
        let v = analytic_json(&["rc", "--sigma", "0.05"]);
        assert!((v["rc"].as_f64().unwrap() - 0.138_592_9).abs() < 1e-7);
    }

    #[test]
    fn bf_command_at_zero_difference() {
        let v = analytic_json(&["bf", "--dy", "0", "--mu-delta", "0", "--eta", "0.9", "--sigma", "0.05"]);
        assert!((v["log_bf10"].as_f64().unwrap() - 0.5 * 0.1_f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn bf_interpret_command() {
        let v = analytic_json(&["bf-interpret", "--bf", "50"]);
        assert_eq!(v["evidence"], "Very strong evidence for M1");
    }

    #[test]
    fn negative_values_parse() {
        let v = analytic_json(&["bf", "--dy", "-0.2", "--mu-delta", "-0.5", "--sigma-delta", "0.1", "--sigma", "0.05"]);
        assert!(v["log_bf10"].as_f64().unwrap().is_finite());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["heterobayes", "analytic", "rc"]), 1);
        assert_eq!(main_with_args(["heterobayes", "analytic", "rc", "--sigma", "-1"]), 1);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"chians": 2}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"chains": 2, "seed": 7}"#).unwrap();
        let s = resolve_sampler(&SamplerArgs::default(), &c).unwrap();
        assert_eq!((s.chains, s.seed), (2, 7));
        let flagged = SamplerArgs { seed: Some(9), ..SamplerArgs::default() };
        assert_eq!(resolve_sampler(&flagged, &c).unwrap().seed, 9);
    }
}
