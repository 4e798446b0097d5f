//! Budgeted Hodges-Lehmann estimators on contaminated data.

use riskcomp::derive_stream;
use riskcomp::mc::sample_contaminated;
use riskcomp::robust::{hl_experiment, hl_full, hl_sequential, HlExperiment, HlVariant};

fn main() -> riskcomp::Result<()> {
    let mut rng = derive_stream(1, 0);
    let x = sample_contaminated(&mut rng, 200, 0.1)?;
    let full = hl_full(&x, &mut rng)?;
    let cheap = hl_sequential(&x, 100, &mut rng)?;
    println!("full: {:.4} for {} ops", full.estimate, full.ledger.grand_total());
    println!(
        "sequential, c = 100: {:.4} for {} ops",
        cheap.estimate,
        cheap.ledger.grand_total()
    );

    let cfg = HlExperiment {
        n: 200,
        alphas: vec![0.0, 0.2],
        budgets: vec![50, 100, 200],
        variants: HlVariant::ALL.to_vec(),
        subset_m: Some(20),
        replicates: 500,
        master_seed: 9,
        parallel: true,
    };
    println!(
        "\n{:>10} {:>5} {:>7} {:>10} {:>10} {:>9}",
        "variant", "alpha", "budget", "cost", "risk", "se"
    );
    for r in hl_experiment(&cfg)? {
        println!(
            "{:>10} {:>5} {:>7} {:>10.0} {:>10.6} {:>9.6}",
            r.variant, r.alpha, r.budget, r.mean_cost, r.risk, r.risk_se
        );
    }
    Ok(())
}
