use super::density::DensityEstimate;
use crate::hmc::{Transform, TransformSpec};
use crate::{Error, Result};

/// Search domain for [`find_mode`].
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Axis-aligned box `[lower_k, upper_k]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// The open K-simplex.
    Simplex(usize),
}

impl Domain {
    /// Bounding box of the estimator's data padded by three bandwidths, or the
    /// simplex for Dirichlet mixtures.
    pub fn for_density(density: &DensityEstimate) -> Domain {
        match density {
            DensityEstimate::DirichletMixture { alphas, .. } => Domain::Simplex(alphas[0].len()),
            DensityEstimate::GaussianKde { points, bandwidth } => bounding_box(points, 3.0 * bandwidth),
            DensityEstimate::GaussianMixture { means, variances, .. } => {
                let d = means[0].len();
                let lower = (0..d)
                    .map(|j| means.iter().zip(variances).map(|(m, v)| m[j] - 3.0 * v[j].sqrt()).fold(f64::INFINITY, f64::min))
                    .collect();
                let upper = (0..d)
                    .map(|j| means.iter().zip(variances).map(|(m, v)| m[j] + 3.0 * v[j].sqrt()).fold(f64::NEG_INFINITY, f64::max))
                    .collect();
                Domain::Box { lower, upper }
            }
        }
    }
}

fn bounding_box(points: &[Vec<f64>], pad: f64) -> Domain {
    let d = points[0].len();
    let lower = (0..d)
        .map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min) - pad)
        .collect();
    let upper = (0..d)
        .map(|j| points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max) + pad)
        .collect();
    Domain::Box { lower, upper }
}

/// Minimizes `f` with the Nelder-Mead simplex method (standard coefficients).
///
/// Stops when both the spread of function values and the simplex diameter
/// fall below the tolerances, or after `max_iter` iterations.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: f64, max_iter: usize, ftol: f64, xtol: f64) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= ftol * (values[0].abs() + 1e-300).max(ftol) && diameter <= xtol {
            break;
        }
        if diameter <= xtol * 1e-3 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = simplex[i]
                        .iter()
                        .zip(&best)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    values[i] = eval(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best].clone(), values[best])
}

fn box_grid(lower: &[f64], upper: &[f64], per_dim: usize) -> Vec<Vec<f64>> {
    let d = lower.len();
    let total = per_dim.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|j| {
                    let i = idx % per_dim;
                    idx /= per_dim;
                    lower[j] + (upper[j] - lower[j]) * i as f64 / (per_dim - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Interior points `i / res` of the K-simplex lattice (all coordinates ≥ 1/res).
fn simplex_lattice(k: usize, res: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            if left >= 1 {
                prefix.push(left);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        for i in 1..left {
            prefix.push(i);
            rec(k - 1, left - i, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, res, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|v| v.into_iter().map(|i| i as f64 / res as f64).collect())
        .collect()
}

type CoordMap = Box<dyn Fn(&[f64]) -> Vec<f64>>;

/// Locates the maximum of `density` over `domain`: a coarse grid (or
/// barycentric lattice) picks starting points, then Nelder-Mead refines
/// `−ln p̂` from the three best (in stick-broken coordinates on the simplex).
pub fn find_mode(density: &DensityEstimate, domain: &Domain) -> Result<Vec<f64>> {
    let (candidates, to_point, from_point): (Vec<Vec<f64>>, CoordMap, CoordMap) =
        match domain {
            Domain::Box { lower, upper } => {
                if lower.len() != density.dim() || upper.len() != lower.len() {
                    return Err(Error::DimensionMismatch {
                        expected: density.dim(),
                        found: lower.len(),
                    });
                }
                let per_dim = if lower.len() <= 2 { 41 } else { 20 };
                (
                    box_grid(lower, upper, per_dim),
                    Box::new(|u: &[f64]| u.to_vec()),
                    Box::new(|x: &[f64]| x.to_vec()),
                )
            }
            Domain::Simplex(k) => {
                if *k != density.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: density.dim(),
                        found: *k,
                    });
                }
                let spec = TransformSpec::new().with("x", Transform::StickBreaking(*k));
                let spec2 = spec.clone();
                (
                    simplex_lattice(*k, 20),
                    Box::new(move |u: &[f64]| spec.constrain(u)),
                    Box::new(move |x: &[f64]| spec2.unconstrain(x).expect("lattice point is interior")),
                )
            }
        };
    let mut scored: Vec<(f64, Vec<f64>)> = candidates
        .into_iter()
        .map(|x| (density.evaluate(&x), x))
        .filter(|(p, _)| p.is_finite())
        .collect();
    if scored.iter().all(|(p, _)| *p <= 0.0) {
        return Err(Error::Numerical("density is zero or non-finite on the whole search grid".into()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let objective = |u: &[f64]| {
        let p = density.evaluate(&to_point(u));
        if p > 0.0 {
            -p.ln()
        } else {
            f64::INFINITY
        }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (_, start) in scored.iter().take(3) {
        let u0 = from_point(start);
        let (u, v) = nelder_mead(objective, &u0, 0.1, 5000, 1e-14, 1e-10);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, u));
        }
    }
    let (_, u) = best.expect("at least one start");
    Ok(to_point(&u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_quadratic() {
        let (x, v) = nelder_mead(|x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2), &[0.0, 0.0], 0.5, 5000, 1e-15, 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6, "{x:?}");
        assert!(v < 1e-10);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, _) = nelder_mead(f, &[-1.2, 1.0], 0.5, 20000, 1e-15, 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5, "{x:?}");
    }

    #[test]
    fn lattice_size() {
        // Compositions of 20 into 3 positive parts: C(19, 2).
        assert_eq!(simplex_lattice(3, 20).len(), 171);
    }
}
