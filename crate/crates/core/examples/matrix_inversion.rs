//! Anytime inverses of a Gram matrix and their least-squares risk.

use riskcomp::matinv::{
    default_beta, deflated_eigs, exact_floor, generate_design, inverse_from_eigs, matinv_experiment, newton_schulz,
    regression_risk, Deflation, DesignConfig, InitMode, MatInvExperiment, Method, Schedule,
};
use riskcomp::{derive_stream, CostLedger};

fn main() -> riskcomp::Result<()> {
    let mut rng = derive_stream(4, 0);
    let design = generate_design(&DesignConfig::new(100, 10, 0.45), &mut rng)?;
    let s = &design.gram;
    let beta = default_beta(10);
    println!("exact-inverse risk {:.6}", exact_floor(s, 1.0)?);

    let mut ledger = CostLedger::new();
    let iterates = newton_schulz(s, InitMode::Safe, 12, &mut ledger)?;
    for (k, b) in iterates.iter().enumerate().step_by(3) {
        println!(
            "  newton-schulz step {k:>2}: risk {:.6}",
            regression_risk(b, s, &beta, 1.0)?
        );
    }

    let mut ledger = CostLedger::new();
    let eigs = deflated_eigs(s, Schedule::Constant(100), Deflation::Hotelling, &mut rng, &mut ledger)?;
    for count in [2, 5, 10] {
        let b = inverse_from_eigs(&eigs, count)?;
        println!(
            "  top {count:>2} eigenpairs: risk {:.6}",
            regression_risk(&b, s, &beta, 1.0)?
        );
    }

    let cfg = MatInvExperiment {
        rhos: vec![0.01, 0.88],
        methods: vec![
            Method::NewtonSchulz {
                init: InitMode::Safe,
                iters: 20,
            },
            Method::Power {
                schedule: Schedule::Decreasing(40),
            },
        ],
        n_rows: 100,
        p: 10,
        datasets: 50,
        sigma2: 1.0,
        deflation: Deflation::Hotelling,
        master_seed: 4,
        parallel: true,
    };
    println!("\naveraged over {} datasets:", cfg.datasets);
    for r in matinv_experiment(&cfg)?.iter().filter(|r| r.checkpoint % 5 == 0) {
        println!(
            "  rho {:<5} {:<22} cost {:>6.0} risk {:>10.4} (floor {:.4})",
            r.rho, r.method, r.cost, r.risk, r.floor_risk
        );
    }
    Ok(())
}
