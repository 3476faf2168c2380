//! Turns per-voxel ADC values into habitat counts: per-lesion 10th/90th
//! percentile thresholds from baseline, then low/mid/high counts per scan.

use heterobayes::distributions::{normal_rng, seeded_rng};
use heterobayes::ingest::{barycentric, extract_habitats, LesionVoxelRecord, ThresholdSource, Timepoint};
use heterobayes::models::LesionId;

fn main() -> heterobayes::Result<()> {
    let mut rng = seeded_rng(5);
    let mut records = Vec::new();
    for (lesion, shift) in [("1", 0.0), ("2", 0.35)] {
        let id = LesionId::new("p1", lesion);
        for (tp, offset) in [(Timepoint::Baseline1, 0.0), (Timepoint::Baseline2, 0.0), (Timepoint::Post, shift)] {
            let values = (0..500).map(|_| normal_rng(&mut rng, 1.0 + offset, 0.15)).collect::<heterobayes::Result<_>>()?;
            records.push(LesionVoxelRecord { id: id.clone(), timepoint: tp, values });
        }
    }

    let extracted = extract_habitats(&records, ThresholdSource::FirstBaseline)?;
    for (id, t) in &extracted.thresholds {
        println!("{id}: thresholds [{:.4}, {:.4}]", t.low, t.high);
    }
    for (set, rows) in [("baseline", &extracted.baseline), ("post", &extracted.post)] {
        for (id, counts) in rows {
            let (x, y) = barycentric(&counts.proportions())?;
            println!("{set:<8} {id}: counts {:?}, ternary ({x:.3}, {y:.3})", counts.as_slice());
        }
    }
    let data = extracted.into_dataset()?;
    println!("dataset: {} baseline and {} post lesions", data.yb.len(), data.yp.len());
    Ok(())
}
