//! Kernel-density credible region on a two-dimensional sample, its boundary,
//! and the anomaly rate of fresh draws from the same distribution.

use heterobayes::distributions::{normal_rng, seeded_rng};
use heterobayes::novelty::{boundary_polyline, credible_region, EstimatorConfig};

fn main() -> heterobayes::Result<()> {
    let mut rng = seeded_rng(1);
    let mut draw = |n: usize| -> heterobayes::Result<Vec<Vec<f64>>> {
        (0..n).map(|_| Ok(vec![normal_rng(&mut rng, 0.0, 1.0)?, normal_rng(&mut rng, 0.0, 1.0)?])).collect()
    };
    let train = draw(5000)?;
    let fresh = draw(2000)?;

    let region = credible_region(train, 0.05, &EstimatorConfig::GaussianKde { bandwidth: Some(0.5) })?;
    println!("mode {:?}, density {:.4}, threshold {:.4}", region.mode, region.mode_density, region.threshold);
    let flagged = fresh.iter().filter(|y| region.is_anomaly(y)).count();
    println!("fresh draws flagged: {:.2}% (alpha 5%)", 100.0 * flagged as f64 / fresh.len() as f64);
    for y in [[0.0, 0.0], [1.5, 1.5], [2.5, 0.0], [3.0, 3.0]] {
        println!("{y:?}: kernel distance {:.4}, anomaly {}", region.kernel_distance(&y), region.is_anomaly(&y));
    }

    let boundary = boundary_polyline(&region, 16)?;
    println!("boundary (x, y):");
    for p in &boundary {
        println!("  {:>7.3} {:>7.3}", p.x, p.y);
    }
    Ok(())
}
