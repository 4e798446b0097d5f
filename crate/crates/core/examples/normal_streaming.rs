//! One-pass split estimators of a normal mean and variance.

use riskcomp::mc::{normal_sample, run_replicates};
use riskcomp::normal::{
    asymptotic_streaming_risk, mle_risk, optimal_split_p, streaming_estimate, streaming_risks, NormalParams,
};
use riskcomp::{derive_stream, CostLedger, McConfig};

fn main() -> riskcomp::Result<()> {
    let params = NormalParams::new(1.0, 1.0)?;
    let n = 200;

    let mut rng = derive_stream(5, 0);
    let x = normal_sample(&mut rng, params.mu, params.sigma2, n);
    let mut ledger = CostLedger::new();
    let est = streaming_estimate(&x, n / 2, &mut ledger)?;
    println!("one sample, s = n/2: {est:?} using {} looks", ledger.grand_total());

    println!("{:>5} {:>12} {:>12} {:>12}", "s", "risk(mu)", "risk(s2)", "mc(s2)");
    for s in [20, 60, 100, 140, 180] {
        let (r_mu, r_s2) = streaming_risks(&params, n, s)?;
        let report = run_replicates(
            &McConfig::new(5000, s as u64),
            &[params.mu, params.sigma2],
            |rng| Ok(normal_sample(rng, params.mu, params.sigma2, n)),
            |x, _, l| Ok(streaming_estimate(x, s, l)?.to_vec()),
        )?;
        println!(
            "{s:>5} {r_mu:>12.6} {r_s2:>12.6} {:>12.6}",
            report.components[1].mean_loss
        );
    }

    let p = optimal_split_p(&params);
    println!(
        "best split fraction {p:.4}: asymptotic risk {:.6} versus two-pass {:.6}",
        asymptotic_streaming_risk(&params, n, p)?,
        mle_risk(&params, n)?
    );
    Ok(())
}
