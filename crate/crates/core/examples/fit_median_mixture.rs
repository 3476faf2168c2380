//! Fits the median-ADC mixture to a simulated cohort and compares the
//! per-lesion posterior odds with the true change labels.

use heterobayes::hmc::SamplerConfig;
use heterobayes::models::{fit, sample_labels, MedianAdcModel, MedianAdcPriors};
use heterobayes::simharness::{diagnostic_accuracy, simulate_median, MedianTruth};

fn main() -> heterobayes::Result<()> {
    let truth = MedianTruth::new(0.7, 0.9, 0.8, 1.0, 1.0, 0.05)?;
    let (data, labels) = simulate_median(&truth, 73, 100, 7)?;
    let model = MedianAdcModel::new(data, MedianAdcPriors::default())?;
    let sampler = SamplerConfig { seed: 7, ..Default::default() };
    let f = fit(&model, &sampler)?;

    println!("{:<7} {:>8} {:>8} {:>19}", "param", "true", "median", "95% HDI");
    for (name, t) in truth.targets() {
        let s = f.samples.summarize(&name)?;
        println!("{name:<7} {t:>8.4} {:>8.4}  [{:.4}, {:.4}]", s.median, s.hdi95.0, s.hdi95.1);
    }
    println!("max R-hat {:.4}", f.max_rhat());

    let z = sample_labels(&model, &f.samples, 8)?;
    let scores: Vec<f64> = (0..labels.len()).map(|n| z.counts(n).log_value()).collect();
    let acc = diagnostic_accuracy(&labels, &scores, 0.0)?;
    println!("sensitivity {:?}, specificity {:?}, AUC {:?}", acc.sensitivity, acc.specificity, acc.auc);
    for (n, changed) in labels.iter().enumerate().take(5) {
        let po = z.counts(n);
        println!("lesion {n}: changed {changed}, PO {:.2}, {}", po.value(), po.category());
    }
    Ok(())
}
