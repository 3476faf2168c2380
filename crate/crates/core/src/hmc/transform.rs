//! Bijections between constrained parameters and unconstrained reals.

use crate::{Error, Result};

/// Constraint kind of one (possibly vector-valued) parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Unbounded real.
    Identity,
    /// Positive real, `θ = exp(u)`.
    Log,
    /// Unit interval, `θ = 1 / (1 + exp(-u))`.
    Logit,
    /// K-simplex from K−1 reals via stick-breaking.
    StickBreaking(usize),
}

impl Transform {
    pub fn constrained_len(&self) -> usize {
        match *self {
            Transform::StickBreaking(k) => k,
            _ => 1,
        }
    }

    pub fn unconstrained_len(&self) -> usize {
        match *self {
            Transform::StickBreaking(k) => k - 1,
            _ => 1,
        }
    }
}

/// Ordered list of named parameters and their transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    params: Vec<(String, Transform)>,
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^a)` without overflow.
#[inline]
fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

impl TransformSpec {
    pub fn new() -> Self {
        TransformSpec { params: Vec::new() }
    }

    pub fn with(mut self, name: impl Into<String>, kind: Transform) -> Self {
        if let Transform::StickBreaking(k) = kind {
            assert!(k >= 2, "simplex needs at least two entries");
        }
        self.params.push((name.into(), kind));
        self
    }

    pub fn params(&self) -> &[(String, Transform)] {
        &self.params
    }

    pub fn constrained_len(&self) -> usize {
        self.params.iter().map(|(_, t)| t.constrained_len()).sum()
    }

    pub fn unconstrained_len(&self) -> usize {
        self.params.iter().map(|(_, t)| t.unconstrained_len()).sum()
    }

    /// Flattened constrained names; simplex entries are `name[1]..name[K]`.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.constrained_len());
        for (name, kind) in &self.params {
            match *kind {
                Transform::StickBreaking(k) => {
                    out.extend((1..=k).map(|i| format!("{name}[{i}]")));
                }
                _ => out.push(name.clone()),
            }
        }
        out
    }

    pub fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.constrained_len() {
            return Err(Error::DimensionMismatch {
                expected: self.constrained_len(),
                found: theta.len(),
            });
        }
        let mut u = Vec::with_capacity(self.unconstrained_len());
        let mut i = 0;
        for (name, kind) in &self.params {
            match *kind {
                Transform::Identity => {
                    if !theta[i].is_finite() {
                        return Err(Error::domain(format!("{name} must be finite")));
                    }
                    u.push(theta[i]);
                }
                Transform::Log => {
                    if !(theta[i] > 0.0 && theta[i].is_finite()) {
                        return Err(Error::domain(format!("{name} must be positive, got {}", theta[i])));
                    }
                    u.push(theta[i].ln());
                }
                Transform::Logit => {
                    let t = theta[i];
                    if !(t > 0.0 && t < 1.0) {
                        return Err(Error::domain(format!("{name} must lie in (0, 1), got {t}")));
                    }
                    u.push(t.ln() - (-t).ln_1p());
                }
                Transform::StickBreaking(k) => {
                    let x = &theta[i..i + k];
                    let total: f64 = x.iter().sum();
                    if x.iter().any(|v| !(*v > 0.0)) || (total - 1.0).abs() > 1e-8 {
                        return Err(Error::domain(format!("{name} must be a simplex, got {x:?}")));
                    }
                    let mut stick = 1.0;
                    for (j, &xj) in x.iter().take(k - 1).enumerate() {
                        let z = (xj / stick).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                        u.push(z.ln() - (-z).ln_1p() + ((k - 1 - j) as f64).ln());
                        stick -= xj;
                    }
                }
            }
            i += kind.constrained_len();
        }
        Ok(u)
    }

    /// Maps `u` to constrained space, writing into `theta`; returns the log-Jacobian.
    pub fn constrain_into(&self, u: &[f64], theta: &mut [f64]) -> f64 {
        let mut log_jac = 0.0;
        let (mut i, mut j) = (0, 0);
        for (_, kind) in &self.params {
            match *kind {
                Transform::Identity => theta[i] = u[j],
                Transform::Log => {
                    theta[i] = u[j].exp();
                    log_jac += u[j];
                }
                Transform::Logit => {
                    theta[i] = sigmoid(u[j]);
                    log_jac += -softplus(-u[j]) - softplus(u[j]);
                }
                Transform::StickBreaking(k) => {
                    let mut stick = 1.0;
                    for m in 0..k - 1 {
                        let a = u[j + m] - ((k - 1 - m) as f64).ln();
                        let z = sigmoid(a);
                        theta[i + m] = stick * z;
                        log_jac += -softplus(-a) - softplus(a) + stick.ln();
                        stick *= 1.0 - z;
                    }
                    theta[i + k - 1] = stick;
                }
            }
            i += kind.constrained_len();
            j += kind.unconstrained_len();
        }
        log_jac
    }

    pub fn constrain(&self, u: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.constrained_len()];
        self.constrain_into(u, &mut theta);
        theta
    }

    /// Gradient in unconstrained space of `f(constrain(u)) + log|J(u)|`, given
    /// `theta = constrain(u)` and the constrained gradient `grad_theta` of `f`.
    pub fn pullback_gradient(&self, u: &[f64], theta: &[f64], grad_theta: &[f64], grad_u: &mut [f64]) {
        let (mut i, mut j) = (0, 0);
        for (_, kind) in &self.params {
            match *kind {
                Transform::Identity => grad_u[j] = grad_theta[i],
                Transform::Log => grad_u[j] = grad_theta[i] * theta[i] + 1.0,
                Transform::Logit => {
                    let t = theta[i];
                    grad_u[j] = grad_theta[i] * t * (1.0 - t) + 1.0 - 2.0 * t;
                }
                Transform::StickBreaking(k) => {
                    // Recompute the forward pass, then sweep backwards.
                    let mut z = vec![0.0; k - 1];
                    let mut sticks = vec![0.0; k];
                    sticks[0] = 1.0;
                    for m in 0..k - 1 {
                        z[m] = sigmoid(u[j + m] - ((k - 1 - m) as f64).ln());
                        sticks[m + 1] = sticks[m] * (1.0 - z[m]);
                    }
                    let mut adj_next = grad_theta[i + k - 1];
                    for m in (0..k - 1).rev() {
                        let zm = z[m];
                        let s = sticks[m];
                        grad_u[j + m] = (grad_theta[i + m] - adj_next) * s * zm * (1.0 - zm) + 1.0 - 2.0 * zm;
                        adj_next = grad_theta[i + m] * zm + adj_next * (1.0 - zm) + 1.0 / s;
                    }
                }
            }
            i += kind.constrained_len();
            j += kind.unconstrained_len();
        }
    }
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self::new()
    }
}
