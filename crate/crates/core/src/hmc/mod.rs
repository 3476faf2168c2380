//! Hamiltonian Monte Carlo over constrained parameters.
//!
//! Parameters are mapped to unconstrained space through a [`TransformSpec`],
//! sampled with fixed-length HMC (jittered number of leapfrog steps) whose step
//! size is tuned by dual averaging during warmup, and a diagonal mass matrix is
//! estimated from the second half of warmup. Draws are returned in constrained
//! space together with split-R̂ diagnostics.

mod diagnostics;
mod sampler;
mod samples;
mod transform;

pub use diagnostics::{split_rhat, summarize_draws, Rhat, Summary};
pub use sampler::{auxiliary_seed, leapfrog, sample, Divergence, SamplerConfig};
pub use samples::PosteriorSamples;
pub use transform::{Transform, TransformSpec};
