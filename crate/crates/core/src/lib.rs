//! Bayesian assessment of imaging-biomarker repeatability and heterogeneous
//! post-treatment change.
//!
//! The crate is organised by capability:
//!
//! - [`distributions`]: log-densities with analytic gradients and seeded random variates.
//! - [`hmc`]: Hamiltonian Monte Carlo over constrained parameters, split-R̂ and posterior summaries.
//! - [`analytic`]: closed-form repeatability statistics and Bayes factors.
//! - [`models`]: the real-valued (median ADC) and Dirichlet-Multinomial (habitat) mixture
//!   models, label resampling and posterior odds.
//! - [`novelty`]: posterior-predictive novelty detection with kernel distances.
//! - [`simharness`]: Latin hypercube simulation studies and their diagnostics.
//! - [`ingest`]: CSV ingestion, habitat extraction and barycentric coordinates.
//! - [`cli`]: the command-line front end used by the `heterobayes` binary.
//!
//! Runnable programs for each capability live in the crate's `examples/` directory.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod distributions;
mod error;
pub mod hmc;
pub mod ingest;
pub mod models;
pub mod novelty;
pub mod simharness;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
