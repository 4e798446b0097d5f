//! Risk/look frontier for estimating a normal mean and variance.

use riskcomp::normal::{frontier_with, NormalParams, TieBreak};

fn main() -> riskcomp::Result<()> {
    let n = 100;
    let budgets: Vec<u64> = (2..=2 * n as u64).collect();
    for (mu, sigma2) in [(0.0, 1.0), (1.0, 1.0), (0.1, 0.25)] {
        let params = NormalParams::new(mu, sigma2)?;
        let curve = frontier_with(&params, n, &budgets, TieBreak::MaxOverlap)?;
        println!("mu = {mu}, sigma2 = {sigma2} (snr {:.2})", params.snr());
        println!("{:>7} {:>4} {:>4} {:>4} {:>10}", "budget", "n1", "n2", "n12", "risk");
        for pt in curve.points.iter().filter(|p| p.budget % 40 == 0 || p.budget == 8) {
            let a = pt.alloc;
            println!(
                "{:>7} {:>4} {:>4} {:>4} {:>10.6}",
                pt.budget, a.n1, a.n2, a.n12, pt.risk
            );
        }
        println!("regime changes near budgets {:?}\n", curve.breakpoints(40));
    }
    Ok(())
}
