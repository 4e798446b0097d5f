//! Operation ledgers and sample allocations.

use riskcomp::cost::{CostRates, MeanCost};
use riskcomp::{Allocation, CostCategory, CostLedger, GeneralAllocation};

fn main() -> riskcomp::Result<()> {
    let alloc = Allocation::new(30, 10, 50);
    alloc.check_within(100)?;
    println!(
        "allocation {alloc:?}: uses {} samples, {} looks",
        alloc.samples_used(),
        alloc.looks()
    );

    // three statistics: x alone, (x, y) shared, all three shared
    let general = GeneralAllocation::new(3)
        .with_region(0b001, 20)
        .with_region(0b011, 15)
        .with_region(0b111, 40);
    println!("sizes {:?}, overlaps {:?}", general.sizes(), general.overlaps());
    println!("cost at unit costs [1, 1.5, 2]: {}", general.cost(&[1.0, 1.5, 2.0])?);

    let mut ledgers = Vec::new();
    for r in 0..4u64 {
        let mut l = CostLedger::new();
        l.charge_looks(100 + r);
        l.charge_comparisons(10 * r);
        ledgers.push(l);
    }
    let mean = MeanCost::from_ledgers(&ledgers);
    println!("mean cost per replicate: {mean:?}");

    let mut total = CostLedger::new();
    ledgers.iter().for_each(|l| total.merge(l));
    for c in CostCategory::ALL {
        println!("{:>16}: {}", c.as_str(), total.total(c));
    }
    println!("ledger as json: {}", total.to_json());

    let rates = CostRates::measure(10);
    println!(
        "rough wall clock of the merged ledger: {:.0} ns",
        rates.estimate_nanos(&total)
    );
    Ok(())
}
