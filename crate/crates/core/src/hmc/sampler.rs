use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::samples::PosteriorSamples;
use super::transform::TransformSpec;
use crate::distributions::{derive_seed, seeded_rng, SeededRng};
use crate::{Error, Result};

/// Energy error above which a trajectory counts as divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Total iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub target_accept: f64,
    /// Leapfrog steps per transition are drawn uniformly from `1..=max_leapfrog_steps`.
    pub max_leapfrog_steps: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 3,
            iterations: 5500,
            warmup: 500,
            target_accept: 0.8,
            max_leapfrog_steps: 10,
            seed: 20240101,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::Usage("chains must be at least 1".into()));
        }
        if self.warmup >= self.iterations {
            return Err(Error::Usage(format!(
                "warmup ({}) must be smaller than iterations ({})",
                self.warmup, self.iterations
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Usage("target_accept must lie in (0, 1)".into()));
        }
        if self.max_leapfrog_steps < 1 {
            return Err(Error::Usage("max_leapfrog_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.warmup
    }
}

/// A trajectory hit a non-finite log-density or gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Divergence;

/// Unit-metric leapfrog integration of `n_steps` steps.
///
/// `grad_fn(q, g)` writes the gradient of the log-density at `q` into `g` and
/// returns the log-density.
pub fn leapfrog<F>(
    position: &[f64],
    momentum: &[f64],
    mut grad_fn: F,
    step: f64,
    n_steps: usize,
) -> std::result::Result<(Vec<f64>, Vec<f64>), Divergence>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut q = position.to_vec();
    let mut p = momentum.to_vec();
    let mut g = vec![0.0; q.len()];
    let lp = grad_fn(&q, &mut g);
    if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Divergence);
    }
    let inv_metric = vec![1.0; q.len()];
    integrate(&mut q, &mut p, &mut g, &inv_metric, step, n_steps, &mut grad_fn)?;
    Ok((q, p))
}

fn integrate<F>(
    q: &mut [f64],
    p: &mut [f64],
    g: &mut [f64],
    inv_metric: &[f64],
    step: f64,
    n_steps: usize,
    grad_fn: &mut F,
) -> std::result::Result<f64, Divergence>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut lp = f64::NAN;
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi += 0.5 * step * gi;
        }
        for ((qi, pi), mi) in q.iter_mut().zip(p.iter()).zip(inv_metric) {
            *qi += step * mi * pi;
        }
        lp = grad_fn(q, g);
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Divergence);
        }
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi += 0.5 * step * gi;
        }
    }
    Ok(lp)
}

fn kinetic(p: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
}

struct DualAveraging {
    mu: f64,
    counter: f64,
    h_bar: f64,
    x_bar: f64,
    delta: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(step: f64, delta: f64) -> Self {
        DualAveraging {
            mu: (10.0 * step).ln(),
            counter: 0.0,
            h_bar: 0.0,
            x_bar: 0.0,
            delta,
        }
    }

    /// Records an acceptance statistic and returns the next step size.
    fn update(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.delta - accept);
        let x = self.mu - self.counter.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.counter.powf(-Self::KAPPA);
        self.x_bar = w * x + (1.0 - w) * self.x_bar;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// The log-density in unconstrained space, including the log-Jacobian.
struct Unconstrained<'a, F> {
    transform: &'a TransformSpec,
    target: &'a F,
    theta: Vec<f64>,
    grad_theta: Vec<f64>,
}

impl<F> Unconstrained<'_, F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn eval(&mut self, u: &[f64], grad_u: &mut [f64]) -> f64 {
        let log_jac = self.transform.constrain_into(u, &mut self.theta);
        if self.theta.iter().any(|t| !t.is_finite()) {
            return f64::NAN;
        }
        self.grad_theta.iter_mut().for_each(|g| *g = 0.0);
        let lp = (self.target)(&self.theta, &mut self.grad_theta);
        if !lp.is_finite() {
            return lp;
        }
        self.transform
            .pullback_gradient(u, &self.theta, &self.grad_theta, grad_u);
        lp + log_jac
    }
}

struct Chain<'a, F> {
    density: Unconstrained<'a, F>,
    rng: SeededRng,
    q: Vec<f64>,
    g: Vec<f64>,
    lp: f64,
    inv_metric: Vec<f64>,
    step: f64,
    max_steps: usize,
}

struct Transition {
    accept: f64,
    divergent: bool,
}

impl<F> Chain<'_, F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn draw_momentum(&mut self) -> Vec<f64> {
        self.inv_metric
            .iter()
            .map(|m| {
                let z: f64 = self.rng.sample(rand_distr::StandardNormal);
                z / m.sqrt()
            })
            .collect()
    }

    fn transition(&mut self) -> Transition {
        let n_steps = self.rng.random_range(1..=self.max_steps);
        self.trajectory(self.step, n_steps, true)
    }

    fn trajectory(&mut self, step: f64, n_steps: usize, commit: bool) -> Transition {
        let mut p = self.draw_momentum();
        let h0 = -self.lp + kinetic(&p, &self.inv_metric);
        let mut q = self.q.clone();
        let mut g = self.g.clone();
        let density = &mut self.density;
        let mut f = |x: &[f64], gr: &mut [f64]| density.eval(x, gr);
        let outcome = integrate(&mut q, &mut p, &mut g, &self.inv_metric, step, n_steps, &mut f);
        let lp_new = match outcome {
            Ok(lp) => lp,
            Err(Divergence) => {
                return Transition {
                    accept: 0.0,
                    divergent: true,
                }
            }
        };
        let h1 = -lp_new + kinetic(&p, &self.inv_metric);
        let dh = h1 - h0;
        if !dh.is_finite() || dh > MAX_ENERGY_ERROR {
            return Transition {
                accept: 0.0,
                divergent: true,
            };
        }
        let accept = (-dh).exp().min(1.0);
        if commit {
            let u: f64 = self.rng.random();
            if u < accept {
                self.q = q;
                self.g = g;
                self.lp = lp_new;
            }
        }
        Transition {
            accept,
            divergent: false,
        }
    }

    /// Doubles or halves the step size until a single leapfrog step crosses
    /// an acceptance probability of 0.8.
    fn init_step_size(&mut self) {
        let threshold = 0.8f64.ln();
        let first = self.trajectory(self.step, 1, false);
        let log_a = |t: &Transition| if t.divergent { f64::NEG_INFINITY } else { t.accept.ln() };
        let direction = if log_a(&first) > threshold { 1.0 } else { -1.0 };
        for _ in 0..60 {
            let candidate = self.step * 2f64.powf(direction);
            let t = self.trajectory(candidate, 1, false);
            let crossed = if direction > 0.0 {
                log_a(&t) <= threshold
            } else {
                log_a(&t) > threshold
            };
            if crossed || !(1e-10..=1e4).contains(&candidate) {
                if direction < 0.0 {
                    self.step = candidate;
                }
                break;
            }
            self.step = candidate;
        }
    }
}

fn regularized_variance(draws: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let n = draws.len() as f64;
    (0..dim)
        .map(|k| {
            let col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            let var = crate::stats::variance(&col);
            (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
        })
        .collect()
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    accept_rate: f64,
    step: f64,
    divergences: usize,
}

fn run_chain<F>(
    target: &F,
    transform: &TransformSpec,
    init_u: &[f64],
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let dim = init_u.len();
    let mut rng = seeded_rng(config.seed.wrapping_add(chain as u64));
    let mut density = Unconstrained {
        transform,
        target,
        theta: vec![0.0; transform.constrained_len()],
        grad_theta: vec![0.0; transform.constrained_len()],
    };

    // Jitter the initial point per chain, then fall back to uniform draws in [-1, 1].
    let mut g = vec![0.0; dim];
    let mut start = None;
    for attempt in 0..200 {
        let q: Vec<f64> = if attempt < 100 {
            init_u.iter().map(|u| u + rng.random_range(-0.5..0.5)).collect()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let lp = density.eval(&q, &mut g);
        if lp.is_finite() && g.iter().all(|v| v.is_finite()) {
            start = Some((q, lp));
            break;
        }
    }
    let (q, lp) = start.ok_or_else(|| Error::domain("log-density is not finite near the initial point"))?;

    let mut chain_state = Chain {
        density,
        rng,
        q,
        g,
        lp,
        inv_metric: vec![1.0; dim],
        step: 1.0,
        max_steps: config.max_leapfrog_steps,
    };

    let warmup = config.warmup;
    let adapt_metric = warmup >= 100;
    let window_start = warmup / 2;
    let window_end = warmup * 9 / 10;
    let mut window: Vec<Vec<f64>> = Vec::new();

    chain_state.init_step_size();
    let mut da = DualAveraging::new(chain_state.step, config.target_accept);
    for it in 0..warmup {
        let t = chain_state.transition();
        chain_state.step = da.update(if t.divergent { 0.0 } else { t.accept });
        if adapt_metric && it >= window_start && it < window_end {
            window.push(chain_state.q.clone());
        }
        if adapt_metric && it + 1 == window_end {
            chain_state.inv_metric = regularized_variance(&window, dim);
            chain_state.step = 1.0;
            chain_state.init_step_size();
            da = DualAveraging::new(chain_state.step, config.target_accept);
        }
    }
    if warmup > 0 {
        chain_state.step = da.final_step();
    }

    let mut draws = Vec::with_capacity(config.retained());
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    let mut theta = vec![0.0; transform.constrained_len()];
    for _ in 0..config.retained() {
        let t = chain_state.transition();
        accept_sum += t.accept;
        divergences += usize::from(t.divergent);
        transform.constrain_into(&chain_state.q, &mut theta);
        draws.push(theta.clone());
    }
    Ok(ChainOutput {
        draws,
        accept_rate: accept_sum / config.retained() as f64,
        step: chain_state.step,
        divergences,
    })
}

/// Runs `config.chains` independent HMC chains on `target`.
///
/// `target(theta, grad)` receives a constrained parameter vector, adds its
/// gradient into the zeroed `grad` and returns the log-density (any value that
/// is not finite marks an infeasible point). Chain `c` is seeded with
/// `config.seed + c` and chains run in parallel on the current rayon pool.
pub fn sample<F>(
    target: F,
    transform: &TransformSpec,
    init: &[f64],
    config: &SamplerConfig,
) -> Result<PosteriorSamples>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    config.validate()?;
    let init_u = transform.unconstrain(init)?;
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&target, transform, &init_u, config, c))
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let divergences: Vec<usize> = outputs.iter().map(|o| o.divergences).collect();
    let total_div: usize = divergences.iter().sum();
    let transitions = config.chains * config.retained();
    if total_div * 100 > transitions {
        warnings.push(format!(
            "{total_div} of {transitions} post-warmup transitions were divergent"
        ));
    }
    Ok(PosteriorSamples {
        names: transform.names(),
        accept_rate: outputs.iter().map(|o| o.accept_rate).collect(),
        step_size: outputs.iter().map(|o| o.step).collect(),
        divergences,
        draws: outputs.into_iter().map(|o| o.draws).collect(),
        warmup: config.warmup,
        warnings,
    })
}

/// Seed for chain-independent auxiliary streams (label draws, predictive draws).
pub fn auxiliary_seed(seed: u64, stream: u64) -> u64 {
    derive_seed(seed, &[0x4155_5849, stream])
}
