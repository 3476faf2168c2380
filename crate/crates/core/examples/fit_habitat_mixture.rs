//! Fits the habitat Dirichlet-Multinomial mixture to simulated habitat counts.

use heterobayes::hmc::SamplerConfig;
use heterobayes::models::{fit, sample_labels, HabitatModel, HabitatPriors};
use heterobayes::simharness::{diagnostic_accuracy, simulate_habitat, HabitatTruth};

fn main() -> heterobayes::Result<()> {
    let truth = HabitatTruth::new(0.7, 0.9, 11.54, 6.37, 1.38)?;
    let (data, labels) = simulate_habitat(&truth, 40, 50, 3)?;
    let model = HabitatModel::new(data, HabitatPriors::default())?;
    let sampler = SamplerConfig { iterations: 2000, warmup: 500, seed: 3, ..Default::default() };
    let f = fit(&model, &sampler)?;

    for (name, t) in truth.targets() {
        let s = f.samples.summarize(&name)?;
        println!("{name:<7} true {t:>7.3}  median {:>7.3}  HDI [{:.3}, {:.3}]", s.median, s.hdi95.0, s.hdi95.1);
    }
    println!("max R-hat {:.4}", f.max_rhat());

    let z = sample_labels(&model, &f.samples, 4)?;
    let scores: Vec<f64> = (0..labels.len()).map(|n| z.counts(n).log_value()).collect();
    let acc = diagnostic_accuracy(&labels, &scores, 0.0)?;
    println!("sensitivity {:?}, specificity {:?}, AUC {:?}", acc.sensitivity, acc.specificity, acc.auc);
    Ok(())
}
