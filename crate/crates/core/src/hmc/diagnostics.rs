//! Split-R̂ and posterior summaries.

use serde::{Deserialize, Serialize};

use crate::stats;
use crate::{Error, Result};

/// Split-chain potential scale reduction factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub value: f64,
    /// Set when every split chain has zero variance; `value` is then 1 by convention.
    pub degenerate: bool,
}

/// Split-R̂ over per-chain draw sequences of one parameter.
///
/// Each chain is cut into two halves (the middle draw of an odd-length chain
/// is dropped) and the classical Gelman-Rubin statistic is computed over the
/// resulting `2 * chains` sequences.
pub fn split_rhat(chains: &[&[f64]]) -> Result<Rhat> {
    if chains.len() < 2 {
        return Err(Error::domain(format!("split-Rhat needs at least 2 chains, got {}", chains.len())));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::domain(format!("split-Rhat needs at least 4 draws per chain, got {n}")));
    }
    let half = n / 2;
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..n];
        pieces.push(&c[..half]);
        pieces.push(&c[n - half..]);
    }
    let m = pieces.len() as f64;
    let len = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| stats::mean(p)).collect();
    let w = pieces.iter().map(|p| stats::variance(p)).sum::<f64>() / m;
    let grand = stats::mean(&means);
    let b = len * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0);
    if !(w > 0.0) {
        // Constant chains stuck at different values never mix.
        let value = if b > 0.0 { f64::INFINITY } else { 1.0 };
        return Ok(Rhat {
            value,
            degenerate: true,
        });
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    Ok(Rhat {
        value: (var_plus / w).sqrt(),
        degenerate: false,
    })
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    /// Central 95% credible interval (type-7 quantiles).
    pub ci95: (f64, f64),
    /// Shortest interval containing 95% of the draws.
    pub hdi95: (f64, f64),
}

pub fn summarize_draws(draws: &[f64]) -> Summary {
    let sorted = stats::sorted(draws);
    Summary {
        median: stats::quantile_sorted(&sorted, 0.5),
        mean: stats::mean(draws),
        sd: stats::sd(draws),
        ci95: (
            stats::quantile_sorted(&sorted, 0.025),
            stats::quantile_sorted(&sorted, 0.975),
        ),
        hdi95: stats::hdi_sorted(&sorted, 0.95),
    }
}
