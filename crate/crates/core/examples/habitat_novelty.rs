//! Per-lesion novelty detection on the habitat simplex: posterior predictive
//! proportions under no change, a Dirichlet-mixture credible region, and
//! anomaly flags for the observed post-treatment lesions.

use heterobayes::hmc::SamplerConfig;
use heterobayes::ingest::barycentric;
use heterobayes::models::{fit, HabitatModel, HabitatPriors};
use heterobayes::novelty::{boundary_polyline, credible_region, predictive_habitat_m0, EstimatorConfig};
use heterobayes::simharness::{simulate_habitat, HabitatTruth};

fn main() -> heterobayes::Result<()> {
    let truth = HabitatTruth::new(0.5, 0.9, 11.54, 5.0, 0.5)?;
    let (data, labels) = simulate_habitat(&truth, 30, 6, 11)?;
    let model = HabitatModel::new(data.clone(), HabitatPriors::default())?;
    let f = fit(&model, &SamplerConfig { iterations: 2000, warmup: 500, seed: 11, ..Default::default() })?;

    for (n, changed) in labels.iter().enumerate() {
        let pred = predictive_habitat_m0(&f.samples, &data, n, 100 + n as u64)?;
        let region = credible_region(pred.to_points(0.5), 0.05, &EstimatorConfig::dirichlet_default(n as u64))?;
        let y = data.yp[n].smoothed_proportions(0.5);
        let (x, yy) = barycentric(&y)?;
        let edge = boundary_polyline(&region, 36)?;
        println!(
            "lesion {n}: changed {:<5} observed ({:.3}, {:.3}, {:.3}) at ({x:.3}, {yy:.3}); anomaly {}; boundary of {} points",
            changed,
            y[0],
            y[1],
            y[2],
            region.is_anomaly(&y),
            edge.len()
        );
    }
    Ok(())
}
