//! Comparisons spent by randomized quickselect on the median.

use rand::Rng;
use riskcomp::mc::mean_and_se;
use riskcomp::robust::quickselect_median;
use riskcomp::{derive_stream, CostCategory, CostLedger};

fn main() -> riskcomp::Result<()> {
    for n in [101usize, 1001, 10_001] {
        let per_element: Vec<f64> = (0..300u64)
            .map(|r| {
                let mut rng = derive_stream(n as u64, r);
                let values: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                let mut ledger = CostLedger::new();
                quickselect_median(&values, &mut rng, &mut ledger)?;
                Ok(ledger.total(CostCategory::Comparison) as f64 / n as f64)
            })
            .collect::<riskcomp::Result<_>>()?;
        let (mean, se) = mean_and_se(&per_element);
        println!("n = {n:>6}: {mean:.3} +/- {se:.3} comparisons per element (limit 3.386)");
    }
    Ok(())
}
