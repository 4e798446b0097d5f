//! Hodges-Lehmann location estimators under pair budgets.
//!
//! Each estimator takes the median of pairwise means `(X_i + X_j)/2`. The full
//! estimator uses every Walsh average (`i <= j`); the budgeted variants use
//! `c/2` distinct-index pairs, costing `c` looks. Medians come from a
//! randomized quickselect that charges one comparison per element per
//! partition, so the ledger records looks plus comparisons.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostLedger;
use crate::error::{Error, Result};
use crate::mc::{derive_lane_stream, mean_and_se, replicate_map, sample_contaminated, McConfig};

/// Element `k` (zero-based) of `values` in sorted order. Partially reorders
/// `values`.
pub fn quickselect<R: Rng + ?Sized>(values: &mut [f64], k: usize, rng: &mut R, ledger: &mut CostLedger) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k >= values.len() {
        return Err(Error::out_of_range("k", k, format!("< {}", values.len())));
    }
    let (mut lo, mut hi) = (0usize, values.len());
    let mut k = k;
    loop {
        let len = hi - lo;
        if len == 1 {
            return Ok(values[lo]);
        }
        let part = &mut values[lo..hi];
        let p = rng.random_range(0..len);
        part.swap(p, len - 1);
        let pivot = part[len - 1];
        // three-way partition of part[..len-1]: [less | equal | greater]
        let (mut lt, mut i, mut gt) = (0usize, 0usize, len - 1);
        while i < gt {
            match part[i].total_cmp(&pivot) {
                std::cmp::Ordering::Less => {
                    part.swap(lt, i);
                    lt += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    gt -= 1;
                    part.swap(i, gt);
                }
                std::cmp::Ordering::Equal => i += 1,
            }
        }
        ledger.charge_comparisons(len as u64 - 1);
        part.swap(gt, len - 1);
        // equal block is now part[lt..=gt]
        if k < lt {
            hi = lo + lt;
        } else if k <= gt {
            return Ok(pivot);
        } else {
            k -= gt + 1;
            lo += gt + 1;
        }
    }
}

/// Median by quickselect; even lengths average the two middle order
/// statistics. The second selection runs on the upper block left by the
/// first, where the upper middle value is the minimum.
pub fn quickselect_median<R: Rng + ?Sized>(values: &[f64], rng: &mut R, ledger: &mut CostLedger) -> Result<f64> {
    let mut buf = values.to_vec();
    let n = buf.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n % 2 == 1 {
        quickselect(&mut buf, n / 2, rng, ledger)
    } else {
        let a = quickselect(&mut buf, n / 2 - 1, rng, ledger)?;
        let b = quickselect(&mut buf[n / 2..], 0, rng, ledger)?;
        Ok(0.5 * (a + b))
    }
}

/// An estimate and the cost of producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct HlResult {
    pub estimate: f64,
    pub ledger: CostLedger,
}

fn median_of_pairs<R: Rng + ?Sized>(means: Vec<f64>, rng: &mut R) -> Result<HlResult> {
    let mut ledger = CostLedger::new();
    ledger.charge_looks(2 * means.len() as u64);
    let estimate = quickselect_median(&means, rng, &mut ledger)?;
    Ok(HlResult { estimate, ledger })
}

fn check_pair_budget(c: u64) -> Result<()> {
    if c < 2 || !c.is_multiple_of(2) {
        return Err(Error::out_of_range("c", c, "an even budget >= 2"));
    }
    Ok(())
}

/// Median of all Walsh averages `(X_i + X_j)/2`, `i <= j`; `n(n+1)` looks.
pub fn hl_full<R: Rng + ?Sized>(sample: &[f64], rng: &mut R) -> Result<HlResult> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut means = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            means.push(0.5 * (sample[i] + sample[j]));
        }
    }
    median_of_pairs(means, rng)
}

/// `(i, j)` with `i < j` for pair index `r` in colex order.
fn unrank_pair(r: u64) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * r as f64).sqrt()) / 2.0) as u64;
    while j * (j - 1) / 2 > r {
        j -= 1;
    }
    while (j + 1) * j / 2 <= r {
        j += 1;
    }
    ((r - j * (j - 1) / 2) as usize, j as usize)
}

/// `k` distinct values from `0..total` (Floyd's algorithm), ascending.
fn floyd_sample<R: Rng + ?Sized>(total: u64, k: u64, rng: &mut R) -> Vec<u64> {
    let mut chosen = BTreeSet::new();
    for j in total - k..total {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

/// `c/2` distinct pairs drawn without replacement from the first `m` points.
pub fn hl_subset<R: Rng + ?Sized>(sample: &[f64], m: usize, c: u64, rng: &mut R) -> Result<HlResult> {
    check_pair_budget(c)?;
    if m < 2 || m > sample.len() {
        return Err(Error::out_of_range("m", m, format!("[2, n] with n = {}", sample.len())));
    }
    let total = (m * (m - 1) / 2) as u64;
    if c / 2 > total {
        return Err(Error::out_of_range("c", c, format!("<= m(m-1) = {}", 2 * total)));
    }
    let means = floyd_sample(total, c / 2, rng)
        .into_iter()
        .map(|r| {
            let (i, j) = unrank_pair(r);
            0.5 * (sample[i] + sample[j])
        })
        .collect();
    median_of_pairs(means, rng)
}

/// `c/2` pairs of distinct indices drawn uniformly with replacement.
pub fn hl_sample<R: Rng + ?Sized>(sample: &[f64], c: u64, rng: &mut R) -> Result<HlResult> {
    check_pair_budget(c)?;
    let n = sample.len();
    if n < 2 {
        return Err(Error::out_of_range("n", n, ">= 2"));
    }
    let means = (0..c / 2)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            0.5 * (sample[i] + sample[j])
        })
        .collect();
    median_of_pairs(means, rng)
}

/// Consecutive disjoint pairs `(X_1, X_2), …, (X_{c-1}, X_c)`. The estimate
/// depends only on the sample; `rng` only drives pivot choice.
pub fn hl_sequential<R: Rng + ?Sized>(sample: &[f64], c: u64, rng: &mut R) -> Result<HlResult> {
    check_pair_budget(c)?;
    if c as usize > sample.len() {
        return Err(Error::out_of_range("c", c, format!("<= n = {}", sample.len())));
    }
    let means = sample[..c as usize]
        .chunks_exact(2)
        .map(|p| 0.5 * (p[0] + p[1]))
        .collect();
    median_of_pairs(means, rng)
}

/// Mean of the first `c` points; `c` looks.
pub fn mean_prefix(sample: &[f64], c: usize, ledger: &mut CostLedger) -> Result<f64> {
    if c == 0 || c > sample.len() {
        return Err(Error::out_of_range("c", c, format!("[1, n] with n = {}", sample.len())));
    }
    ledger.charge_looks(c as u64);
    Ok(sample[..c].iter().sum::<f64>() / c as f64)
}

/// Estimators compared in the contamination experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HlVariant {
    Full,
    Subset,
    Sample,
    Sequential,
    Mean,
}

impl HlVariant {
    pub const ALL: [HlVariant; 5] = [
        HlVariant::Full,
        HlVariant::Subset,
        HlVariant::Sample,
        HlVariant::Sequential,
        HlVariant::Mean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HlVariant::Full => "full",
            HlVariant::Subset => "subset",
            HlVariant::Sample => "sample",
            HlVariant::Sequential => "sequential",
            HlVariant::Mean => "mean",
        }
    }
}

impl fmt::Display for HlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// Settings for [`hl_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlExperiment {
    pub n: usize,
    pub alphas: Vec<f64>,
    /// Pair-look budgets `c`; the mean uses `c` looks.
    pub budgets: Vec<u64>,
    pub variants: Vec<HlVariant>,
    /// Subset size; defaults to `⌊√n⌋`.
    pub subset_m: Option<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    pub parallel: bool,
}

impl HlExperiment {
    pub fn subset_size(&self) -> usize {
        self.subset_m.unwrap_or_else(|| (self.n as f64).sqrt().floor() as usize)
    }

    /// Every range and feasibility problem, without running anything.
    pub fn validate(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        if self.n < 2 {
            errs.push(Error::out_of_range("n", self.n, ">= 2"));
        }
        if self.replicates < 2 {
            errs.push(Error::out_of_range("replicates", self.replicates, ">= 2"));
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                errs.push(Error::out_of_range("alpha", a, "alpha must be in [0,1]"));
            }
        }
        if self.variants.is_empty() {
            errs.push(Error::out_of_range("variants", "[]", "at least one variant"));
        }
        let m = self.subset_size();
        let needs_budget = self.variants.iter().any(|v| *v != HlVariant::Full);
        if needs_budget && self.budgets.is_empty() {
            errs.push(Error::out_of_range("budgets", "[]", "at least one budget"));
        }
        for &c in &self.budgets {
            if c < 2 || !c.is_multiple_of(2) {
                errs.push(Error::out_of_range("c", c, "an even budget >= 2"));
                continue;
            }
            for v in &self.variants {
                match v {
                    HlVariant::Sequential | HlVariant::Mean if c as usize > self.n => {
                        errs.push(Error::out_of_range("c", c, format!("{v} needs c <= n = {}", self.n)))
                    }
                    HlVariant::Subset if m < 2 || m > self.n || c / 2 > (m * (m - 1) / 2) as u64 => errs.push(
                        Error::out_of_range("c", c, format!("subset needs m in [2, n] and c <= m(m-1) with m = {m}")),
                    ),
                    _ => {}
                }
            }
        }
        errs
    }
}

/// One `(variant, alpha, budget)` cell of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HlRow {
    pub variant: HlVariant,
    pub alpha: f64,
    /// Pair-look budget, or `n(n+1)` for the full estimator.
    pub budget: u64,
    /// Mean of looks plus comparisons per replicate.
    pub mean_cost: f64,
    pub risk: f64,
    pub risk_se: f64,
    pub replicates: usize,
}

const ALGO_LANE_BASE: u64 = 1 << 32;

/// Squared-error risk about the center 0 of the contaminated mixture
/// `(1-α) N(0,1) + α · 4 t₃`. Within a contamination level every estimator
/// sees the same data in each replicate.
pub fn hl_experiment(cfg: &HlExperiment) -> Result<Vec<HlRow>> {
    if let Some(e) = cfg.validate().into_iter().next() {
        return Err(e);
    }
    let m = cfg.subset_size();
    let mut cells: Vec<(HlVariant, u64)> = Vec::new();
    for &v in &cfg.variants {
        if v == HlVariant::Full {
            cells.push((v, (cfg.n * (cfg.n + 1)) as u64));
        } else {
            cells.extend(cfg.budgets.iter().map(|&c| (v, c)));
        }
    }
    let mc = McConfig {
        replicates: cfg.replicates,
        master_seed: cfg.master_seed,
        parallel: cfg.parallel,
    };
    let mut rows = Vec::with_capacity(cfg.alphas.len() * cells.len());
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let per_rep: Vec<Vec<(f64, u64)>> = replicate_map(&mc, |r, _| {
            let mut data_rng = derive_lane_stream(cfg.master_seed, ai as u64, r as u64);
            let x = sample_contaminated(&mut data_rng, cfg.n, alpha)?;
            cells
                .iter()
                .enumerate()
                .map(|(ci, &(v, c))| {
                    let lane = ALGO_LANE_BASE + (ai * cells.len() + ci) as u64;
                    let mut rng = derive_lane_stream(cfg.master_seed, lane, r as u64);
                    let res = match v {
                        HlVariant::Full => hl_full(&x, &mut rng)?,
                        HlVariant::Subset => hl_subset(&x, m, c, &mut rng)?,
                        HlVariant::Sample => hl_sample(&x, c, &mut rng)?,
                        HlVariant::Sequential => hl_sequential(&x, c, &mut rng)?,
                        HlVariant::Mean => {
                            let mut ledger = CostLedger::new();
                            let estimate = mean_prefix(&x, c as usize, &mut ledger)?;
                            HlResult { estimate, ledger }
                        }
                    };
                    Ok((res.estimate * res.estimate, res.ledger.grand_total()))
                })
                .collect()
        })?;
        for (ci, &(variant, budget)) in cells.iter().enumerate() {
            let losses: Vec<f64> = per_rep.iter().map(|row| row[ci].0).collect();
            let costs: Vec<f64> = per_rep.iter().map(|row| row[ci].1 as f64).collect();
            let (risk, risk_se) = mean_and_se(&losses);
            let (mean_cost, _) = mean_and_se(&costs);
            rows.push(HlRow {
                variant,
                alpha,
                budget,
                mean_cost,
                risk,
                risk_se,
                replicates: cfg.replicates,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::derive_stream;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    fn sorted_median(v: &[f64]) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    }

    #[test]
    fn median_hand_cases() {
        let mut rng = derive_stream(1, 0);
        let mut l = CostLedger::new();
        assert_eq!(quickselect_median(&[3.0, 1.0, 2.0], &mut rng, &mut l).unwrap(), 2.0);
        assert_eq!(
            quickselect_median(&[1.0, 2.0, 3.0, 4.0], &mut rng, &mut l).unwrap(),
            2.5
        );
        assert!(matches!(
            quickselect_median(&[], &mut rng, &mut l),
            Err(Error::EmptyInput)
        ));
        assert_eq!(quickselect_median(&[7.0; 9], &mut rng, &mut l).unwrap(), 7.0);
    }

    #[test]
    fn median_comparison_count_near_knuth() {
        let n = 10_001;
        let mut total = 0u64;
        let reps = 50;
        for r in 0..reps {
            let mut rng = derive_stream(3, r);
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut l = CostLedger::new();
            quickselect_median(&v, &mut rng, &mut l).unwrap();
            total += l.grand_total();
        }
        let mean = total as f64 / reps as f64 / n as f64;
        assert!((mean - 3.386).abs() / 3.386 < 0.1, "{mean}");
    }

    #[test]
    fn hl_full_cases() {
        let mut rng = derive_stream(2, 0);
        assert_eq!(hl_full(&[4.5], &mut rng).unwrap().estimate, 4.5);
        assert_eq!(hl_full(&[0.0, 2.0], &mut rng).unwrap().estimate, 1.0);
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let r = hl_full(&x, &mut rng).unwrap();
        assert_eq!(r.ledger.total(crate::cost::CostCategory::DataLook), 110);
        assert!(hl_full(&[], &mut rng).is_err());
    }

    #[test]
    fn hl_full_symmetric_sample() {
        let mut rng = derive_stream(5, 0);
        // n = 5 gives 15 Walsh averages (odd)
        let x = [3.0 - 2.5, 3.0 - 1.0, 3.0, 3.0 + 1.0, 3.0 + 2.5];
        assert_eq!(hl_full(&x, &mut rng).unwrap().estimate, 3.0);
    }

    #[test]
    fn subset_cases() {
        let mut rng = derive_stream(6, 0);
        let x = [1.0, 5.0, 2.0, 8.0, 3.0];
        let r = hl_subset(&x, 2, 2, &mut rng).unwrap();
        assert_eq!(r.estimate, 3.0);
        assert_eq!(r.ledger.total(crate::cost::CostCategory::DataLook), 2);
        // all pairs of the first 4 points
        let r = hl_subset(&x, 4, 12, &mut rng).unwrap();
        let mut pairs = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                pairs.push(0.5 * (x[i] + x[j]));
            }
        }
        assert_eq!(r.estimate, sorted_median(&pairs));
        assert!(hl_subset(&x, 4, 14, &mut rng).is_err());
        assert!(hl_subset(&x, 6, 2, &mut rng).is_err());
        assert!(hl_subset(&x, 4, 3, &mut rng).is_err());
        assert_eq!((2000f64).sqrt().floor() as usize, 44);
    }

    #[test]
    fn sample_and_sequential_cases() {
        let mut rng = derive_stream(7, 0);
        for c in [2u64, 10, 40] {
            assert_eq!(hl_sample(&[1.0, 4.0], c, &mut rng).unwrap().estimate, 2.5);
        }
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 1.3).sin()).collect();
        let a = hl_sample(&x, 20, &mut derive_stream(9, 1)).unwrap();
        let b = hl_sample(&x, 20, &mut derive_stream(9, 1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ledger.total(crate::cost::CostCategory::DataLook), 20);
        assert!(hl_sample(&[1.0], 2, &mut rng).is_err());

        assert_eq!(hl_sequential(&[1.0, 3.0, 2.0, 8.0], 4, &mut rng).unwrap().estimate, 3.5);
        assert_eq!(hl_sequential(&[1.0, 3.0, 2.0, 8.0], 2, &mut rng).unwrap().estimate, 2.0);
        assert!(hl_sequential(&[1.0, 3.0], 4, &mut rng).is_err());
        assert!(hl_sequential(&[1.0, 3.0, 4.0], 3, &mut rng).is_err());
    }

    #[test]
    fn mean_prefix_cases() {
        let mut l = CostLedger::new();
        let x = [2.0, 4.0, 9.0];
        assert_eq!(mean_prefix(&x, 3, &mut l).unwrap(), 5.0);
        assert_eq!(mean_prefix(&x, 1, &mut l).unwrap(), 2.0);
        assert_eq!(l.grand_total(), 4);
        assert!(mean_prefix(&x, 0, &mut l).is_err());
        assert!(mean_prefix(&x, 4, &mut l).is_err());
    }

    #[test]
    fn unrank_covers_all_pairs() {
        let mut k = 0;
        for j in 1..60usize {
            for i in 0..j {
                assert_eq!(unrank_pair(k), (i, j));
                k += 1;
            }
        }
    }

    #[test]
    fn floyd_is_distinct_and_complete() {
        let mut rng = derive_stream(8, 0);
        let s = floyd_sample(100, 100, &mut rng);
        assert_eq!(s, (0..100).collect::<Vec<_>>());
        let s = floyd_sample(1000, 37, &mut rng);
        assert_eq!(s.len(), 37);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    fn small_experiment(parallel: bool) -> HlExperiment {
        HlExperiment {
            n: 40,
            alphas: vec![0.05, 0.2],
            budgets: vec![10, 20, 40],
            variants: HlVariant::ALL.to_vec(),
            subset_m: Some(10),
            replicates: 30,
            master_seed: 11,
            parallel,
        }
    }

    #[test]
    fn experiment_shape_and_determinism() {
        let rows = hl_experiment(&small_experiment(true)).unwrap();
        assert_eq!(rows.len(), 2 * (1 + 4 * 3));
        assert_eq!(rows, hl_experiment(&small_experiment(false)).unwrap());
        let full = rows.iter().find(|r| r.variant == HlVariant::Full).unwrap();
        assert_eq!(full.budget, 40 * 41);
        let seq = rows
            .iter()
            .find(|r| r.variant == HlVariant::Sequential && r.budget == 20)
            .unwrap();
        assert!(seq.mean_cost > 20.0);
    }

    #[test]
    fn experiment_validation() {
        let mut cfg = small_experiment(false);
        cfg.budgets = vec![3, 60];
        cfg.alphas.push(1.5);
        let errs = cfg.validate();
        // odd budget, 60 > n for sequential and mean, subset pairs, alpha
        assert!(errs.len() >= 4, "{errs:?}");
        assert!(hl_experiment(&cfg).is_err());
    }

    proptest! {
        #[test]
        fn quickselect_matches_sort(v in prop::collection::vec(-1e3f64..1e3, 1..200), seed in 0u64..1000) {
            let mut rng = derive_stream(seed, 0);
            let mut l = CostLedger::new();
            let med = quickselect_median(&v, &mut rng, &mut l).unwrap();
            prop_assert_eq!(med, sorted_median(&v));
            let n = v.len() as u64;
            let h = if n.is_multiple_of(2) { n / 2 } else { 0 };
            let (lo, hi) = (n - 1 + h.saturating_sub(1), n * (n - 1) / 2 + h * h.saturating_sub(1) / 2);
            prop_assert!(l.grand_total() >= lo && l.grand_total() <= hi);
        }

        #[test]
        fn estimates_within_sample_range(v in prop::collection::vec(-50f64..50.0, 4..60), seed in 0u64..100) {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut rng = derive_stream(seed, 0);
            let c = 2 * (v.len() as u64 / 2);
            let m = v.len();
            let ests = [
                hl_full(&v, &mut rng).unwrap(),
                hl_subset(&v, m, c.min((m * (m - 1)) as u64), &mut rng).unwrap(),
                hl_sample(&v, c, &mut rng).unwrap(),
                hl_sequential(&v, c, &mut rng).unwrap(),
            ];
            let pairs = [(m * (m + 1) / 2) as u64, c / 2, c / 2, c / 2];
            for (e, p) in ests.iter().zip(pairs) {
                prop_assert!(e.estimate >= lo && e.estimate <= hi);
                prop_assert_eq!(e.ledger.total(crate::cost::CostCategory::DataLook), 2 * p);
            }
        }
    }
}
