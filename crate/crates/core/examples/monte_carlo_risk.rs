//! Reproducible Monte Carlo risk of the sample mean, serial and parallel.

use riskcomp::mc::{normal_sample, run_replicates};
use riskcomp::McConfig;

fn main() -> riskcomp::Result<()> {
    let (mu, sigma2, n) = (2.0, 4.0, 50);
    let sampler = |rng: &mut riskcomp::RngStream| Ok(normal_sample(rng, mu, sigma2, n));
    let mean = |x: &Vec<f64>, _: &mut riskcomp::RngStream, ledger: &mut riskcomp::CostLedger| {
        ledger.charge_looks(x.len() as u64);
        Ok(vec![x.iter().sum::<f64>() / x.len() as f64])
    };

    let cfg = McConfig::new(20_000, 11);
    let parallel = run_replicates(&cfg, &[mu], sampler, mean)?;
    let serial = run_replicates(&cfg.serial(), &[mu], sampler, mean)?;

    let exact = sigma2 / n as f64;
    println!(
        "risk {:.6} +/- {:.6} (exact {exact:.6}, z = {:.2})",
        parallel.risk.mean_loss,
        parallel.risk.std_error,
        parallel.risk.z_score(exact)
    );
    println!("mean looks per replicate: {}", parallel.mean_cost.data_look);
    println!("serial and parallel identical: {}", parallel == serial);
    Ok(())
}
