//! Test-retest repeatability of a simulated baseline cohort, then the
//! classical and predictive checks for one post-treatment reading.

use heterobayes::analytic::{conditional_predictive_m0, pvalue_change, RepeatabilityEstimate};
use heterobayes::simharness::{simulate_median, MedianTruth};

fn main() -> heterobayes::Result<()> {
    // ADC in 1e-3 mm²/s: population mean 1.0, ICC 0.9, measurement error 0.05.
    let truth = MedianTruth::new(0.0, 0.8, 0.9, 0.0, 1.0, 0.05)?;
    let (data, _) = simulate_median(&truth, 40, 1, 1)?;
    let pairs = data.baseline_pairs();

    let est = RepeatabilityEstimate::from_pairs(&pairs, None, None)?;
    println!("pairs      {}", est.n_pairs);
    println!("sigma_hat  {:.4}  (true {:.4})", est.sigma_hat, truth.sigma);
    println!("ICC        {:.3}", est.icc);
    println!("CoV        {:.2}%", est.cov_pct);
    println!("RC         {:.4}", est.rc);

    let (y0, y1): (f64, f64) = (1.05, 1.22);
    println!("\nlesion read {y0} before and {y1} after treatment");
    println!("exceeds RC: {}", (y1 - y0).abs() > est.rc);
    println!("p-value of the change: {:.4}", pvalue_change(y1 - y0, &pairs)?);
    let sigma0 = truth.sigma0;
    let (m, s) = conditional_predictive_m0(y0, 1.0, sigma0, est.sigma_hat)?;
    println!("predictive under no change: N({m:.4}, {s:.4}); 95% band [{:.4}, {:.4}]", m - 1.96 * s, m + 1.96 * s);
    Ok(())
}
