//! Posterior-predictive novelty detection under the no-change model.
//!
//! Predictive draws are turned into a density estimate `p̂`, whose mode `y†`
//! anchors the kernel distance `D(y) = |p̂(y†) − p̂(y)|`. The credible region
//! is `{y : D(y) ≤ D*}` where `D*` is the `(1−α)` quantile of `D` over the
//! predictive draws; points outside it are anomalies.

mod density;
mod mode;

pub use density::{
    dirichlet_mixture_em, gaussian_kde, gaussian_mixture_em, silverman_bandwidth, DensityEstimate, EmFit,
};
pub use mode::{find_mode, nelder_mead, Domain};

use serde::{Deserialize, Serialize};

use crate::distributions::{dirichlet_rng, multinomial_rng, normal_rng, seeded_rng, CountVec, SimplexVec};
use crate::hmc::PosteriorSamples;
use crate::ingest::{barycentric, from_barycentric};
use crate::models::{HabitatDataset, MedianAdcDataset};
use crate::stats;
use crate::{Error, Result};

/// Posterior-predictive draws, one per retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveSamples {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
    Counts(Vec<CountVec>),
}

impl PredictiveSamples {
    pub fn len(&self) -> usize {
        match self {
            PredictiveSamples::Scalar(v) => v.len(),
            PredictiveSamples::Vector(v) => v.len(),
            PredictiveSamples::Counts(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points for density estimation. Counts become simplexes after adding
    /// `pseudo_count` to every bin.
    pub fn to_points(&self, pseudo_count: f64) -> Vec<Vec<f64>> {
        match self {
            PredictiveSamples::Scalar(v) => v.iter().map(|x| vec![*x]).collect(),
            PredictiveSamples::Vector(v) => v.clone(),
            PredictiveSamples::Counts(v) => v
                .iter()
                .map(|c| c.smoothed_proportions(pseudo_count).into_inner())
                .collect(),
        }
    }
}

/// Pseudo-count added to every habitat bin before normalizing.
pub const HABITAT_PSEUDO_COUNT: f64 = 0.5;

/// Median-model predictive for the post-treatment value of `lesion` under no
/// change: `y0 + N(0, √2·sdrˢ)` with `y0` the lesion's pre-treatment value.
pub fn predictive_median_m0(
    samples: &PosteriorSamples,
    data: &MedianAdcDataset,
    lesion: usize,
    seed: u64,
) -> Result<PredictiveSamples> {
    let y0 = *data
        .yp1
        .get(lesion)
        .ok_or_else(|| Error::domain(format!("unknown lesion index {lesion}")))?;
    Ok(PredictiveSamples::Scalar(
        predictive_median_differences(samples, seed)?
            .into_iter()
            .map(|d| y0 + d)
            .collect(),
    ))
}

/// Predictive post-minus-pre differences `N(0, √2·sdrˢ)` shared by every lesion.
pub fn predictive_median_differences(samples: &PosteriorSamples, seed: u64) -> Result<Vec<f64>> {
    let sdr = samples.pooled("sdr")?;
    let mut rng = seeded_rng(seed);
    sdr.iter()
        .map(|s| normal_rng(&mut rng, 0.0, std::f64::consts::SQRT_2 * s))
        .collect()
}

/// Habitat predictive for `lesion` under no change: `xˢ ~ Dir(μ0, τˢ)`,
/// `yˢ ~ Mult(xˢ, N_v)` with `N_v` the lesion's post-treatment voxel count.
pub fn predictive_habitat_m0(
    samples: &PosteriorSamples,
    data: &HabitatDataset,
    lesion: usize,
    seed: u64,
) -> Result<PredictiveSamples> {
    let y = data
        .yp
        .get(lesion)
        .ok_or_else(|| Error::domain(format!("unknown lesion index {lesion}")))?;
    let prec = samples.pooled("prec")?;
    predictive_habitat_counts(&prec, &data.mu0, y.total(), seed)
}

/// Null-model count draws for given precision draws and voxel count.
pub fn predictive_habitat_counts(prec: &[f64], mu0: &SimplexVec, n_voxels: u64, seed: u64) -> Result<PredictiveSamples> {
    let mut rng = seeded_rng(seed);
    let draws = prec
        .iter()
        .map(|&tau| {
            let x = dirichlet_rng(&mut rng, mu0, tau)?;
            CountVec::new(multinomial_rng(&mut rng, &x, n_voxels)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictiveSamples::Counts(draws))
}

/// How to estimate the predictive density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorConfig {
    /// Isotropic Gaussian KDE; Silverman's bandwidth when `bandwidth` is `None`.
    GaussianKde { bandwidth: Option<f64> },
    GaussianMixture { components: usize, seed: u64 },
    DirichletMixture {
        components: usize,
        seed: u64,
        max_iter: usize,
        tol: f64,
    },
}

impl EstimatorConfig {
    pub fn dirichlet_default(seed: u64) -> Self {
        EstimatorConfig::DirichletMixture {
            components: 5,
            seed,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// Estimates a density from points.
pub fn estimate_density(points: Vec<Vec<f64>>, config: &EstimatorConfig) -> Result<DensityEstimate> {
    match *config {
        EstimatorConfig::GaussianKde { bandwidth } => {
            let h = match bandwidth {
                Some(h) => h,
                None => silverman_bandwidth(&points),
            };
            gaussian_kde(points, h)
        }
        EstimatorConfig::GaussianMixture { components, seed } => {
            Ok(gaussian_mixture_em(&points, components, seed, 500, 1e-8)?.density)
        }
        EstimatorConfig::DirichletMixture {
            components,
            seed,
            max_iter,
            tol,
        } => {
            let simplexes = points
                .into_iter()
                .map(|p| SimplexVec::from_weights(&p))
                .collect::<Result<Vec<_>>>()?;
            Ok(dirichlet_mixture_em(&simplexes, components, seed, max_iter, tol)?.density)
        }
    }
}

/// `|p̂(mode) − p̂(y)|`.
pub fn kernel_distance(density: &DensityEstimate, mode: &[f64], y: &[f64]) -> f64 {
    (density.evaluate(mode) - density.evaluate(y)).abs()
}

/// The `(1−α)` acceptance set under the no-change model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleRegion {
    pub density: DensityEstimate,
    pub mode: Vec<f64>,
    pub mode_density: f64,
    pub threshold: f64,
    pub alpha: f64,
}

impl CredibleRegion {
    pub fn kernel_distance(&self, y: &[f64]) -> f64 {
        (self.mode_density - self.density.evaluate(y)).abs()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.kernel_distance(y) <= self.threshold
    }

    pub fn is_anomaly(&self, y: &[f64]) -> bool {
        !self.contains(y)
    }
}

/// Fits a density to predictive points, finds its mode and sets the
/// threshold to the type-7 `(1−α)` quantile of kernel distances.
pub fn credible_region(points: Vec<Vec<f64>>, alpha: f64, config: &EstimatorConfig) -> Result<CredibleRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if points.len() < 100 {
        return Err(Error::domain(format!("need at least 100 predictive draws, got {}", points.len())));
    }
    let density = estimate_density(points.clone(), config)?;
    let mode = find_mode(&density, &Domain::for_density(&density))?;
    let mode_density = density.evaluate(&mode);
    let distances: Vec<f64> = points.iter().map(|y| (mode_density - density.evaluate(y)).abs()).collect();
    let threshold = stats::quantile(&distances, 1.0 - alpha);
    Ok(CredibleRegion {
        density,
        mode,
        mode_density,
        threshold,
        alpha,
    })
}

/// Convenience wrapper: region from predictive samples (habitat counts are smoothed).
pub fn credible_region_from_predictive(pred: &PredictiveSamples, alpha: f64, config: &EstimatorConfig) -> Result<CredibleRegion> {
    credible_region(pred.to_points(HABITAT_PSEUDO_COUNT), alpha, config)
}

/// Interval `[lower, upper]` of a one-dimensional region around its mode,
/// searching outward up to `max_radius`.
pub fn interval_boundary(region: &CredibleRegion, max_radius: f64) -> Result<(f64, f64)> {
    if region.mode.len() != 1 {
        return Err(Error::domain("interval boundary needs a one-dimensional region"));
    }
    let m = region.mode[0];
    let inside = |t: f64| region.contains(&[m + t]);
    let lower = m - ray_crossing(|t| inside(-t), max_radius);
    let upper = m + ray_crossing(inside, max_radius);
    Ok((lower, upper))
}

/// Largest `t ∈ [0, max]` with `inside(t)` along a ray, found by a coarse
/// march followed by bisection.
fn ray_crossing<F: Fn(f64) -> bool>(inside: F, max: f64) -> f64 {
    let steps = 400;
    let mut last_in = 0.0;
    for i in 1..=steps {
        let t = max * i as f64 / steps as f64;
        if !inside(t) {
            let (mut lo, mut hi) = (last_in, t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        last_in = t;
    }
    max
}

/// One vertex of a region boundary in plane coordinates, with its simplex
/// coordinates when the region lives on the 3-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    pub simplex: Option<Vec<f64>>,
}

/// Closed boundary polyline of a two-dimensional region (plane coordinates)
/// or of a 3-simplex region (barycentric coordinates), traced by rays from the
/// mode at `n_angles` equally spaced directions. The first point is repeated
/// at the end.
pub fn boundary_polyline(region: &CredibleRegion, n_angles: usize) -> Result<Vec<BoundaryPoint>> {
    let simplex = region.density.is_simplex();
    let (cx, cy, max_radius) = if simplex {
        if region.mode.len() != 3 {
            return Err(Error::domain("simplex boundaries need K = 3"));
        }
        let (x, y) = barycentric(&region.mode)?;
        (x, y, 1.0)
    } else {
        if region.mode.len() != 2 {
            return Err(Error::domain("plane boundaries need a two-dimensional region"));
        }
        let radius = match Domain::for_density(&region.density) {
            Domain::Box { lower, upper } => lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| u - l)
                .fold(0.0, f64::max),
            Domain::Simplex(_) => 1.0,
        };
        (region.mode[0], region.mode[1], radius)
    };
    let to_point = |x: f64, y: f64| -> Option<Vec<f64>> {
        if simplex {
            let s = from_barycentric(x, y);
            s.iter().all(|v| *v > 1e-12).then_some(s)
        } else {
            Some(vec![x, y])
        }
    };
    let mut out = Vec::with_capacity(n_angles + 1);
    for i in 0..n_angles {
        let a = 2.0 * std::f64::consts::PI * i as f64 / n_angles as f64;
        let (dx, dy) = (a.cos(), a.sin());
        let inside = |t: f64| match to_point(cx + t * dx, cy + t * dy) {
            Some(p) => region.contains(&p),
            None => false,
        };
        let t = ray_crossing(inside, max_radius);
        let (x, y) = (cx + t * dx, cy + t * dy);
        out.push(BoundaryPoint {
            x,
            y,
            simplex: if simplex { Some(from_barycentric(x, y)) } else { None },
        });
    }
    if let Some(first) = out.first().cloned() {
        out.push(first);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_has_zero_distance() {
        let points: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 / 200.0 - 0.5) * 4.0]).collect();
        let region = credible_region(points, 0.05, &EstimatorConfig::GaussianKde { bandwidth: Some(0.5) }).unwrap();
        assert_eq!(region.kernel_distance(&region.mode.clone()), 0.0);
        assert!(!region.is_anomaly(&region.mode.clone()));
        assert!(region.is_anomaly(&[100.0]));
    }

    #[test]
    fn too_few_draws() {
        let points = vec![vec![0.0]; 99];
        assert!(credible_region(points, 0.05, &EstimatorConfig::GaussianKde { bandwidth: Some(0.5) }).is_err());
    }
}
