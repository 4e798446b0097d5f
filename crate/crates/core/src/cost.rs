//! Abstract compute-cost accounting.
//!
//! Cost is an integer operation count, not wall-clock time. Every estimator
//! charges a [`CostLedger`] in one of three categories; allocations of samples
//! to sufficient statistics carry their own (possibly weighted) cost.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of elementary operation being counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCategory {
    /// Reading one data point and folding it into a running statistic.
    DataLook,
    /// One element comparison inside a selection algorithm.
    Comparison,
    /// One length-p vector product (matrix-vector or row-column).
    VectorMultiply,
}

impl CostCategory {
    pub const ALL: [CostCategory; 3] = [
        CostCategory::DataLook,
        CostCategory::Comparison,
        CostCategory::VectorMultiply,
    ];

    fn index(self) -> usize {
        match self {
            CostCategory::DataLook => 0,
            CostCategory::Comparison => 1,
            CostCategory::VectorMultiply => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CostCategory::DataLook => "data_look",
            CostCategory::Comparison => "comparison",
            CostCategory::VectorMultiply => "vector_multiply",
        }
    }
}

impl fmt::Display for CostCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// A charge of `amount` operations of one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostUnit {
    pub category: CostCategory,
    pub amount: u64,
}

impl CostUnit {
    pub fn new(category: CostCategory, amount: u64) -> Self {
        Self { category, amount }
    }

    pub fn looks(amount: u64) -> Self {
        Self::new(CostCategory::DataLook, amount)
    }

    pub fn comparisons(amount: u64) -> Self {
        Self::new(CostCategory::Comparison, amount)
    }

    pub fn vector_multiplies(amount: u64) -> Self {
        Self::new(CostCategory::VectorMultiply, amount)
    }
}

/// Append-only tally of operation counts by category.
///
/// Totals only ever grow; `grand_total` is the sum over categories after
/// every charge. Parallel runs keep private ledgers and [`merge`](Self::merge)
/// them afterwards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CostLedger {
    totals: [u64; 3],
    grand_total: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, unit: CostUnit) {
        self.totals[unit.category.index()] += unit.amount;
        self.grand_total += unit.amount;
    }

    /// Functional form of [`charge`](Self::charge).
    pub fn charged(mut self, unit: CostUnit) -> Self {
        self.charge(unit);
        self
    }

    pub fn charge_looks(&mut self, amount: u64) {
        self.charge(CostUnit::looks(amount));
    }

    pub fn charge_comparisons(&mut self, amount: u64) {
        self.charge(CostUnit::comparisons(amount));
    }

    pub fn charge_vector_multiplies(&mut self, amount: u64) {
        self.charge(CostUnit::vector_multiplies(amount));
    }

    pub fn total(&self, category: CostCategory) -> u64 {
        self.totals[category.index()]
    }

    pub fn grand_total(&self) -> u64 {
        self.grand_total
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for c in CostCategory::ALL {
            self.charge(CostUnit::new(c, other.total(c)));
        }
    }

    /// Snapshot as `{category: count, ..., "grand_total": n}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for c in CostCategory::ALL {
            map.insert(c.as_str().to_owned(), self.total(c).into());
        }
        map.insert("grand_total".to_owned(), self.grand_total.into());
        serde_json::Value::Object(map)
    }
}

impl Serialize for CostLedger {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CostLedger {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw: BTreeMap<String, u64> = BTreeMap::deserialize(deserializer)?;
        let mut ledger = CostLedger::new();
        for c in CostCategory::ALL {
            ledger.charge(CostUnit::new(c, raw.get(c.as_str()).copied().unwrap_or(0)));
        }
        if let Some(&g) = raw.get("grand_total") {
            if g != ledger.grand_total {
                return Err(D::Error::custom(format!(
                    "grand_total {g} does not equal the category sum {}",
                    ledger.grand_total
                )));
            }
        }
        Ok(ledger)
    }
}

/// Average of many ledgers, one per Monte Carlo replicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MeanCost {
    pub data_look: f64,
    pub comparison: f64,
    pub vector_multiply: f64,
    pub grand_total: f64,
}

impl MeanCost {
    pub fn from_ledgers<'a>(ledgers: impl IntoIterator<Item = &'a CostLedger>) -> Self {
        let mut sum = CostLedger::new();
        let mut count = 0usize;
        for l in ledgers {
            sum.merge(l);
            count += 1;
        }
        if count == 0 {
            return Self::default();
        }
        let r = count as f64;
        Self {
            data_look: sum.total(CostCategory::DataLook) as f64 / r,
            comparison: sum.total(CostCategory::Comparison) as f64 / r,
            vector_multiply: sum.total(CostCategory::VectorMultiply) as f64 / r,
            grand_total: sum.grand_total() as f64 / r,
        }
    }
}

/// Measured nanoseconds per operation category.
///
/// Only used to translate ledgers into rough wall-clock estimates for
/// reporting; no estimator or optimizer reads it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostRates {
    pub nanos: [f64; 3],
}

impl CostRates {
    /// Time a few tight loops representative of each category.
    pub fn measure(vector_len: usize) -> Self {
        const REPS: usize = 1 << 16;
        let data: Vec<f64> = (0..REPS).map(|i| (i as f64).sin()).collect();

        let t = Instant::now();
        let mut acc = 0.0;
        for &x in &data {
            acc += x * x;
        }
        std::hint::black_box(acc);
        let look = t.elapsed().as_nanos() as f64 / REPS as f64;

        let t = Instant::now();
        let mut below = 0usize;
        for &x in &data {
            if x.total_cmp(&0.25).is_lt() {
                below += 1;
            }
        }
        std::hint::black_box(below);
        let cmp = t.elapsed().as_nanos() as f64 / REPS as f64;

        let len = vector_len.max(1);
        let reps = (REPS / len).max(1);
        let a = &data[..len.min(data.len())];
        let t = Instant::now();
        let mut dot = 0.0;
        for _ in 0..reps {
            dot += a.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
        }
        std::hint::black_box(dot);
        let vm = t.elapsed().as_nanos() as f64 / reps as f64;

        Self { nanos: [look, cmp, vm] }
    }

    pub fn estimate_nanos(&self, ledger: &CostLedger) -> f64 {
        CostCategory::ALL
            .iter()
            .map(|&c| self.nanos[c.index()] * ledger.total(c) as f64)
            .sum()
    }
}

/// Every unit cost must be finite and strictly positive.
pub fn check_unit_costs(unit_costs: &[f64]) -> Result<()> {
    for (index, &value) in unit_costs.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveUnitCost { index, value });
        }
    }
    Ok(())
}

/// Two-statistic allocation: samples used only for the first statistic,
/// only for the second, or for both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Allocation {
    pub n1: u64,
    pub n2: u64,
    pub n12: u64,
}

impl Allocation {
    pub fn new(n1: u64, n2: u64, n12: u64) -> Self {
        Self { n1, n2, n12 }
    }

    /// Build from signed counts, rejecting negatives.
    pub fn try_from_signed(n1: i64, n2: i64, n12: i64) -> Result<Self> {
        let conv = |name, v: i64| u64::try_from(v).map_err(|_| Error::out_of_range(name, v, "a count >= 0"));
        Ok(Self::new(conv("n1", n1)?, conv("n2", n2)?, conv("n12", n12)?))
    }

    /// Everything overlapping: the full two-look estimator on `n` samples.
    pub fn full(n: u64) -> Self {
        Self::new(0, 0, n)
    }

    /// Disjoint split: `s` samples for the first statistic, `n - s` for the second.
    pub fn streaming(n: u64, s: u64) -> Self {
        Self::new(s, n.saturating_sub(s), 0)
    }

    pub fn samples_used(&self) -> u64 {
        self.n1 + self.n2 + self.n12
    }

    /// `|S_1| = n1 + n12`.
    pub fn first_size(&self) -> u64 {
        self.n1 + self.n12
    }

    /// `|S_2| = n2 + n12`.
    pub fn second_size(&self) -> u64 {
        self.n2 + self.n12
    }

    /// Look count with unit costs: `n1 + n2 + 2 n12`.
    pub fn looks(&self) -> u64 {
        self.n1 + self.n2 + 2 * self.n12
    }

    pub fn check_within(&self, n: u64) -> Result<()> {
        if self.samples_used() > n {
            return Err(Error::InfeasibleAllocation(format!(
                "n1 + n2 + n12 = {} exceeds n = {n}",
                self.samples_used()
            )));
        }
        Ok(())
    }

    /// Both statistics see at least one sample.
    pub fn check_nondegenerate(&self) -> Result<()> {
        if self.first_size() == 0 || self.second_size() == 0 {
            return Err(Error::InfeasibleAllocation(format!(
                "both n1 + n12 and n2 + n12 must be >= 1 (got {self})"
            )));
        }
        Ok(())
    }

    pub fn to_general(&self) -> GeneralAllocation {
        GeneralAllocation::new(2)
            .with_region(0b01, self.n1)
            .with_region(0b10, self.n2)
            .with_region(0b11, self.n12)
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n1={}, n2={}, n12={})", self.n1, self.n2, self.n12)
    }
}

/// Cost of a two-statistic allocation: `n1 c1 + n2 c2 + n12 (c1 + c2)`.
pub fn allocation_cost(alloc: &Allocation, unit_costs: [f64; 2]) -> Result<f64> {
    check_unit_costs(&unit_costs)?;
    let [c1, c2] = unit_costs;
    Ok(alloc.n1 as f64 * c1 + alloc.n2 as f64 * c2 + alloc.n12 as f64 * (c1 + c2))
}

/// Allocation of samples among `p` statistics in a block layout.
///
/// Samples are grouped into regions; a region is identified by the bit mask
/// of the statistics its samples contribute to. Region counts determine every
/// set size `|S_k|` and pairwise overlap `|S_k ∩ S_l|`, and any layout stored
/// here is realizable with `samples_used()` samples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeneralAllocation {
    p: usize,
    regions: BTreeMap<u32, u64>,
}

impl GeneralAllocation {
    pub const MAX_STATISTICS: usize = 31;

    pub fn new(p: usize) -> Self {
        assert!(
            (1..=Self::MAX_STATISTICS).contains(&p),
            "statistic count must be in 1..=31"
        );
        Self {
            p,
            regions: BTreeMap::new(),
        }
    }

    /// Every statistic computed on the same `n` samples.
    pub fn full(p: usize, n: u64) -> Self {
        Self::new(p).with_region(Self::full_mask(p), n)
    }

    /// Disjoint sets of the given sizes.
    pub fn disjoint(sizes: &[u64]) -> Self {
        let mut alloc = Self::new(sizes.len());
        for (k, &s) in sizes.iter().enumerate() {
            alloc.set_region(1 << k, s);
        }
        alloc
    }

    pub fn full_mask(p: usize) -> u32 {
        if p == 32 {
            u32::MAX
        } else {
            (1u32 << p) - 1
        }
    }

    pub fn with_region(mut self, mask: u32, count: u64) -> Self {
        self.set_region(mask, count);
        self
    }

    pub fn set_region(&mut self, mask: u32, count: u64) {
        assert!(
            mask != 0 && mask & !Self::full_mask(self.p) == 0,
            "region mask {mask:#b} invalid for {} statistics",
            self.p
        );
        if count == 0 {
            self.regions.remove(&mask);
        } else {
            self.regions.insert(mask, count);
        }
    }

    pub fn region(&self, mask: u32) -> u64 {
        self.regions.get(&mask).copied().unwrap_or(0)
    }

    /// Non-empty regions in ascending mask order.
    pub fn regions(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.regions.iter().map(|(&m, &c)| (m, c))
    }

    pub fn num_statistics(&self) -> usize {
        self.p
    }

    pub fn samples_used(&self) -> u64 {
        self.regions.values().sum()
    }

    /// `|S_k|` for every statistic.
    pub fn sizes(&self) -> Vec<u64> {
        (0..self.p).map(|k| self.overlap(k, k)).collect()
    }

    /// `|S_k ∩ S_l|` (equal to `|S_k|` when `k == l`).
    pub fn overlap(&self, k: usize, l: usize) -> u64 {
        let want = (1u32 << k) | (1u32 << l);
        self.regions
            .iter()
            .filter(|(&m, _)| m & want == want)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Pairwise overlaps `|S_k ∩ S_l|` for `k < l`, row-major.
    pub fn overlaps(&self) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::new();
        for k in 0..self.p {
            for l in k + 1..self.p {
                out.push((k, l, self.overlap(k, l)));
            }
        }
        out
    }

    /// Weighted cost `Σ_k c_k |S_k|`.
    pub fn cost(&self, unit_costs: &[f64]) -> Result<f64> {
        if unit_costs.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: format!("{} unit costs", self.p),
                found: unit_costs.len().to_string(),
            });
        }
        check_unit_costs(unit_costs)?;
        Ok(self.sizes().iter().zip(unit_costs).map(|(&s, &c)| s as f64 * c).sum())
    }

    pub fn check_within(&self, n: u64) -> Result<()> {
        if self.samples_used() > n {
            return Err(Error::InfeasibleAllocation(format!(
                "allocation uses {} samples but only {n} are available",
                self.samples_used()
            )));
        }
        Ok(())
    }

    /// Every statistic has at least one sample.
    pub fn check_nonempty(&self) -> Result<()> {
        if let Some(k) = self.sizes().iter().position(|&s| s == 0) {
            return Err(Error::InfeasibleAllocation(format!(
                "statistic {} has an empty sample set",
                k + 1
            )));
        }
        Ok(())
    }

    /// Back to the two-statistic form, when `p == 2`.
    pub fn to_pair(&self) -> Option<Allocation> {
        (self.p == 2).then(|| Allocation::new(self.region(0b01), self.region(0b10), self.region(0b11)))
    }
}
