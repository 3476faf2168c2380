use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{seeded_rng, SimplexVec, LN_2PI};
use crate::special::{digamma, inv_digamma, ln_gamma};
use crate::stats;
use crate::{Error, Result};

/// A fitted density over real vectors or over the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityEstimate {
    GaussianKde {
        points: Vec<Vec<f64>>,
        bandwidth: f64,
    },
    /// Diagonal-covariance Gaussian mixture.
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
    /// Mixture of Dirichlets, each given by its concentration vector.
    DirichletMixture {
        weights: Vec<f64>,
        alphas: Vec<Vec<f64>>,
    },
}

impl DensityEstimate {
    pub fn dim(&self) -> usize {
        match self {
            DensityEstimate::GaussianKde { points, .. } => points[0].len(),
            DensityEstimate::GaussianMixture { means, .. } => means[0].len(),
            DensityEstimate::DirichletMixture { alphas, .. } => alphas[0].len(),
        }
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self, DensityEstimate::DirichletMixture { .. })
    }

    /// Density at `y`; zero outside the support.
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        match self {
            DensityEstimate::GaussianKde { points, bandwidth } => {
                let d = y.len() as f64;
                let inv = 1.0 / (bandwidth * bandwidth);
                let norm = (-0.5 * d * LN_2PI - d * bandwidth.ln()).exp();
                let total: f64 = points
                    .iter()
                    .map(|p| {
                        let r2: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                        (-0.5 * r2 * inv).exp()
                    })
                    .sum();
                norm * total / points.len() as f64
            }
            DensityEstimate::GaussianMixture {
                weights,
                means,
                variances,
            } => weights
                .iter()
                .zip(means.iter().zip(variances))
                .map(|(w, (m, v))| w * diag_normal_lpdf(y, m, v).exp())
                .sum(),
            DensityEstimate::DirichletMixture { weights, alphas } => {
                if y.iter().any(|v| !(*v > 0.0)) || (y.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return 0.0;
                }
                let ln_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();
                weights
                    .iter()
                    .zip(alphas)
                    .map(|(w, a)| w * (dirichlet_norm(a) + dot_minus_one(a, &ln_y)).exp())
                    .sum()
            }
        }
    }
}

fn diag_normal_lpdf(y: &[f64], m: &[f64], v: &[f64]) -> f64 {
    y.iter()
        .zip(m.iter().zip(v))
        .map(|(y, (m, v))| -0.5 * (LN_2PI + v.ln() + (y - m) * (y - m) / v))
        .sum()
}

/// `lnΓ(Σα) − Σ lnΓ(α_k)`.
fn dirichlet_norm(alpha: &[f64]) -> f64 {
    ln_gamma(alpha.iter().sum()) - alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>()
}

fn dot_minus_one(alpha: &[f64], ln_y: &[f64]) -> f64 {
    alpha.iter().zip(ln_y).map(|(a, l)| (a - 1.0) * l).sum()
}

/// Silverman's rule-of-thumb bandwidth using the mean marginal standard deviation.
pub fn silverman_bandwidth(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points[0].len();
    let sd = (0..d)
        .map(|k| stats::sd(&points.iter().map(|p| p[k]).collect::<Vec<_>>()))
        .sum::<f64>()
        / d as f64;
    let df = d as f64;
    (4.0 / (df + 2.0)).powf(1.0 / (df + 4.0)) * n.powf(-1.0 / (df + 4.0)) * sd
}

/// Isotropic Gaussian kernel density estimate.
pub fn gaussian_kde(points: Vec<Vec<f64>>, bandwidth: f64) -> Result<DensityEstimate> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    check_points(&points, 1)?;
    Ok(DensityEstimate::GaussianKde { points, bandwidth })
}

fn check_points(points: &[Vec<f64>], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::domain(format!("need at least {min} points, got {}", points.len())));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("points must be finite and share one dimension"));
    }
    Ok(())
}

/// Result of an EM fit: the density plus its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub density: DensityEstimate,
    /// Mean log-likelihood per point after each iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    /// Components re-seeded after collapsing.
    pub reseeds: usize,
    pub converged: bool,
}

const MAX_RESEEDS: usize = 10;
const MAX_CONCENTRATION: f64 = 1e6;

/// k-means++ seeding: indices of `c` well-spread points.
fn kmeanspp<R: Rng>(points: &[Vec<f64>], c: usize, rng: &mut R) -> Vec<usize> {
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![rng.random_range(0..points.len())];
    let mut best: Vec<f64> = points.iter().map(|p| dist2(p, &points[centers[0]])).collect();
    while centers.len() < c {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            best.iter()
                .position(|d| {
                    acc += d;
                    acc > u
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(next);
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(dist2(p, &points[next]));
        }
    }
    centers
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d: f64 = p.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Dirichlet concentration matching the weighted mean and variance of points.
fn dirichlet_moments(points: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let k = points[0].len();
    let sw: f64 = w.iter().sum();
    let mut mean = vec![0.0; k];
    for (p, wi) in points.iter().zip(w) {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += wi * v / sw;
        }
    }
    let mut var = vec![0.0; k];
    for (p, wi) in points.iter().zip(w) {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += wi * (v - m) * (v - m) / sw;
        }
    }
    let taus: Vec<f64> = mean
        .iter()
        .zip(&var)
        .filter(|(_, v)| **v > 0.0)
        .map(|(m, v)| m * (1.0 - m) / v - 1.0)
        .collect();
    let tau = if taus.is_empty() { 10.0 } else { stats::mean(&taus) }.clamp(0.5, 1e4);
    mean.iter().map(|m| (m * tau).max(1e-3)).collect()
}

/// Maximizes `Σ_k (α_k − 1) s_k + lnΓ(Σα) − Σ lnΓ(α_k)` by Minka's fixed point.
fn dirichlet_mle_fixed_point(alpha: &mut [f64], mean_log: &[f64]) {
    for _ in 0..1000 {
        let psi_sum = digamma(alpha.iter().sum());
        let mut change = 0.0f64;
        for (a, s) in alpha.iter_mut().zip(mean_log) {
            let new = inv_digamma(psi_sum + s);
            change = change.max((new - *a).abs() / *a);
            *a = new;
        }
        if change < 1e-10 {
            break;
        }
    }
}

/// EM fit of a mixture of Dirichlets to strictly interior simplex points.
///
/// Stops when the relative change of the log-likelihood falls below `tol` or
/// after `max_iter` iterations. A component whose weight vanishes or whose
/// concentration overflows is re-seeded at a random point; more than ten
/// re-seeds is an error.
pub fn dirichlet_mixture_em(
    points: &[SimplexVec],
    n_components: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<EmFit> {
    if n_components == 0 {
        return Err(Error::domain("need at least one component"));
    }
    if points.len() < 10 * n_components {
        return Err(Error::domain(format!(
            "need at least {} points for {n_components} components, got {}",
            10 * n_components,
            points.len()
        )));
    }
    let k = points[0].len();
    if points.iter().any(|p| p.len() != k) {
        return Err(Error::domain("points must share one dimension"));
    }
    let n = points.len();
    let raw: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let ln_x: Vec<Vec<f64>> = raw.iter().map(|p| p.iter().map(|v| v.ln()).collect()).collect();
    let mut rng = seeded_rng(seed);

    // Hard k-means++ assignment for the initial components.
    let centers: Vec<Vec<f64>> = kmeanspp(&raw, n_components, &mut rng)
        .into_iter()
        .map(|i| raw[i].clone())
        .collect();
    let assign: Vec<usize> = raw.iter().map(|p| nearest(p, &centers)).collect();
    let mut weights = vec![0.0; n_components];
    let mut alphas = Vec::with_capacity(n_components);
    for c in 0..n_components {
        let w: Vec<f64> = assign.iter().map(|&a| if a == c { 1.0 } else { 0.0 }).collect();
        let count: f64 = w.iter().sum();
        weights[c] = count.max(1.0) / n as f64;
        alphas.push(if count >= 2.0 {
            dirichlet_moments(&raw, &w)
        } else {
            centers[c].iter().map(|v| v * 10.0 * k as f64).collect()
        });
    }
    normalize(&mut weights);

    let mut resp = vec![vec![0.0; n_components]; n];
    let mut trace = Vec::new();
    let mut reseeds = 0;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        // E-step.
        let norms: Vec<f64> = alphas.iter().map(|a| dirichlet_norm(a)).collect();
        let mut ll = 0.0;
        for (r, lx) in resp.iter_mut().zip(&ln_x) {
            for c in 0..n_components {
                r[c] = weights[c].ln() + norms[c] + dot_minus_one(&alphas[c], lx);
            }
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = r.iter().map(|v| (v - m).exp()).sum();
            let l = m + s.ln();
            ll += l;
            r.iter_mut().for_each(|v| *v = (*v - l).exp());
        }
        let ll = ll / n as f64;
        if !ll.is_finite() {
            return Err(Error::Numerical("Dirichlet mixture log-likelihood is not finite".into()));
        }
        if let Some(prev) = trace.last() {
            let prev: f64 = *prev;
            if ((ll - prev) / prev.abs().max(1e-300)).abs() < tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);

        // M-step, warm-started from the current concentrations.
        for c in 0..n_components {
            let rc: f64 = resp.iter().map(|r| r[c]).sum();
            weights[c] = rc / n as f64;
            let collapsed = rc < 1e-8 * n as f64 || rc < 1.0;
            if !collapsed {
                let mean_log: Vec<f64> = (0..k)
                    .map(|j| resp.iter().zip(&ln_x).map(|(r, lx)| r[c] * lx[j]).sum::<f64>() / rc)
                    .collect();
                dirichlet_mle_fixed_point(&mut alphas[c], &mean_log);
            }
            let overflow = alphas[c].iter().sum::<f64>() > MAX_CONCENTRATION
                || alphas[c].iter().any(|a| !a.is_finite());
            if collapsed || overflow {
                reseeds += 1;
                if reseeds > MAX_RESEEDS {
                    return Err(Error::Numerical(format!(
                        "Dirichlet mixture component collapsed more than {MAX_RESEEDS} times"
                    )));
                }
                let p = &raw[rng.random_range(0..n)];
                alphas[c] = p.iter().map(|v| (v * 10.0 * k as f64).max(1e-3)).collect();
                weights[c] = 1.0 / n_components as f64;
            }
        }
        normalize(&mut weights);
    }
    Ok(EmFit {
        density: DensityEstimate::DirichletMixture { weights, alphas },
        log_likelihood: trace,
        iterations,
        reseeds,
        converged,
    })
}

/// EM fit of a diagonal-covariance Gaussian mixture.
pub fn gaussian_mixture_em(
    points: &[Vec<f64>],
    n_components: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<EmFit> {
    check_points(points, 10 * n_components.max(1))?;
    let n = points.len();
    let d = points[0].len();
    let mut rng = seeded_rng(seed);
    let global_var: Vec<f64> = (0..d)
        .map(|j| stats::variance(&points.iter().map(|p| p[j]).collect::<Vec<_>>()).max(1e-12))
        .collect();
    let floor: Vec<f64> = global_var.iter().map(|v| v * 1e-6).collect();
    let mut means: Vec<Vec<f64>> = kmeanspp(points, n_components, &mut rng)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut variances = vec![global_var.clone(); n_components];
    let mut weights = vec![1.0 / n_components as f64; n_components];
    let mut resp = vec![vec![0.0; n_components]; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut reseeds = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut ll = 0.0;
        for (r, p) in resp.iter_mut().zip(points) {
            for c in 0..n_components {
                r[c] = weights[c].ln() + diag_normal_lpdf(p, &means[c], &variances[c]);
            }
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let l = m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            ll += l;
            r.iter_mut().for_each(|v| *v = (*v - l).exp());
        }
        let ll = ll / n as f64;
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if ((ll - prev) / prev.abs().max(1e-300)).abs() < tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        for c in 0..n_components {
            let rc: f64 = resp.iter().map(|r| r[c]).sum();
            if rc < 1.0 {
                reseeds += 1;
                if reseeds > MAX_RESEEDS {
                    return Err(Error::Numerical("Gaussian mixture component collapsed repeatedly".into()));
                }
                means[c] = points[rng.random_range(0..n)].clone();
                variances[c] = global_var.clone();
                weights[c] = 1.0 / n_components as f64;
                continue;
            }
            weights[c] = rc / n as f64;
            for j in 0..d {
                let m = resp.iter().zip(points).map(|(r, p)| r[c] * p[j]).sum::<f64>() / rc;
                let v = resp.iter().zip(points).map(|(r, p)| r[c] * (p[j] - m) * (p[j] - m)).sum::<f64>() / rc;
                means[c][j] = m;
                variances[c][j] = v.max(floor[j]);
            }
        }
        normalize(&mut weights);
    }
    Ok(EmFit {
        density: DensityEstimate::GaussianMixture {
            weights,
            means,
            variances,
        },
        log_likelihood: trace,
        iterations,
        reseeds,
        converged,
    })
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
}
