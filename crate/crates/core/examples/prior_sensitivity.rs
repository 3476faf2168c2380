//! Refits the median-ADC model over a grid of prior widths, with and without
//! post-treatment lesions, and prints the sweep as CSV.

use heterobayes::cli::{median_prior_sensitivity, write_sensitivity_csv};
use heterobayes::hmc::SamplerConfig;
use heterobayes::simharness::{simulate_median, MedianTruth};

fn main() -> heterobayes::Result<()> {
    let truth = MedianTruth::new(0.6, 0.9, 0.8, 0.8, 1.0, 0.05)?;
    let (data, _) = simulate_median(&truth, 20, 15, 4)?;
    let sampler = SamplerConfig { iterations: 2000, warmup: 500, seed: 4, ..Default::default() };
    let rows = median_prior_sensitivity(&data, &[0.1, 1.0, 10.0], &[0.5, 5.0], &sampler)?;
    write_sensitivity_csv(&rows, std::io::stdout())
}
