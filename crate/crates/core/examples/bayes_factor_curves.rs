//! Expected log Bayes factor of change over a grid of heterogeneity `eta` and
//! effect size `xi`, under both hypotheses, plus the evidence band of each.

use heterobayes::analytic::{expected_log_bf, interpret_bf, log_bf10, EffectParams, Hypothesis};

fn main() -> heterobayes::Result<()> {
    println!("{:>6} {:>4} {:>10} {:>10}  evidence under M1", "eta", "xi", "E[lnBF|M0]", "E[lnBF|M1]");
    for eta in [0.6, 0.8, 0.9, 0.95, 0.99] {
        for xi in [0.0, 1.0, 2.0, 3.0] {
            let m0 = expected_log_bf(eta, xi, Hypothesis::M0)?;
            let m1 = expected_log_bf(eta, xi, Hypothesis::M1)?;
            println!("{eta:>6} {xi:>4} {m0:>10.4} {m1:>10.4}  {}", interpret_bf(m1.exp())?.label());
        }
    }

    // A single observed change with sigma = 0.05 and a 0.3 expected shift.
    let effect = EffectParams::from_eta(0.3, 0.9, 0.05)?;
    for dy in [0.0, 0.1, 0.2, 0.3, 0.5] {
        let lbf = log_bf10(dy, &effect)?;
        println!("dy = {dy:.1}: ln BF10 = {lbf:>8.3} ({})", interpret_bf(lbf.exp())?.label());
    }
    Ok(())
}
