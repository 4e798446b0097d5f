//! Budgeted allocation of data points to sufficient statistics.

use nalgebra::DVector;
use riskcomp::expfam::{
    family_by_name, optimize_allocation, optimize_allocation_relaxed, GammaFamily, RelaxationOptions, Target,
};

fn main() -> riskcomp::Result<()> {
    let gamma = GammaFamily::with_unit_costs(vec![3.0, 1.0])?;
    let tau = gamma_tau(&gamma)?;
    println!("gamma(shape 2, rate 1), log costs 3x: tau = {:?}", tau.as_slice());
    for budget in [4.0, 20.0, 100.0, 300.0] {
        let best = optimize_allocation(&gamma, &tau, &Target::identity(2), budget, 100)?;
        println!(
            "  budget {budget:>5}: {}",
            serde_json::to_string(&best).expect("serializes")
        );
    }

    let bern = family_by_name("bernoulli")?;
    let target = Target::natural(bern.clone());
    let best = optimize_allocation(bern.as_ref(), &DVector::from_vec(vec![0.2]), &target, 50.0, 80)?;
    println!("bernoulli log-odds at budget 50: risk {:.5}", best.risk);

    // a custom three-component target on the normal family
    let normal = family_by_name("normal")?;
    let tau = DVector::from_vec(vec![1.0, 2.0]);
    let target = Target::custom("moments", 3, |t: &DVector<f64>| {
        Ok(DVector::from_vec(vec![t[0], t[1] - t[0] * t[0], t[0] / t[1]]))
    });
    let best = optimize_allocation_relaxed(normal.as_ref(), &tau, &target, 60.0, 50, &RelaxationOptions::default())?;
    println!("custom target: sizes {:?}, risk {:.5}", best.alloc.sizes(), best.risk);
    Ok(())
}

fn gamma_tau(family: &GammaFamily) -> riskcomp::Result<DVector<f64>> {
    use riskcomp::expfam::ExponentialFamily;
    family.tau_of_theta(&DVector::from_vec(vec![1.0, -1.0]))
}
