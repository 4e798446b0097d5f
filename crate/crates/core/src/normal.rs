//! Mean and variance estimation for normal data under look budgets.
//!
//! Three estimator families share one cost model (one look = one data point
//! folded into one running sum):
//!
//! - the full two-look estimator (cost `2n`),
//! - streaming estimators that see each point once (cost `n`), with the first
//!   `s` points feeding `Σ X` and the rest feeding `Σ X²`,
//! - mixed allocations `(n1, n2, n12)` with cost `n1 + n2 + 2 n12`.
//!
//! Closed-form and asymptotic risks are provided for each, along with an
//! exhaustive optimizer that traces the optimal allocation across budgets.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::cost::{Allocation, CostLedger};
use crate::error::{Error, Result};

/// Population mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalParams {
    pub mu: f64,
    pub sigma2: f64,
}

impl NormalParams {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) || !mu.is_finite() {
            return Err(Error::out_of_range("sigma2", sigma2, "a finite value > 0"));
        }
        Ok(Self { mu, sigma2 })
    }

    /// Signal-to-noise ratio `μ / σ`.
    pub fn snr(&self) -> f64 {
        self.mu / self.sigma2.sqrt()
    }
}

/// An estimate of `(μ, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanVar {
    pub mu: f64,
    pub sigma2: f64,
}

impl MeanVar {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.mu, self.sigma2]
    }
}

/// First-moment sum over `S_1` and second-moment sum over `S_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSums {
    pub m1: f64,
    pub m2: f64,
    pub n1_eff: usize,
    pub n2_eff: usize,
}

impl MomentSums {
    /// `M1` over `sample[first]`, `M2` over `sample[second]`.
    fn over(sample: &[f64], first: std::ops::Range<usize>, second: std::ops::Range<usize>) -> Self {
        let mut m1 = 0.0;
        for &x in &sample[first.clone()] {
            m1 += x;
        }
        let mut m2 = 0.0;
        for &x in &sample[second.clone()] {
            m2 += x * x;
        }
        Self {
            m1,
            m2,
            n1_eff: first.len(),
            n2_eff: second.len(),
        }
    }

    /// Plug-in estimate `μ̂ = M1/|S1|`, `σ̂² = M2/|S2| - μ̂²`.
    fn plug_in(&self) -> MeanVar {
        let mu = self.m1 / self.n1_eff as f64;
        MeanVar {
            mu,
            sigma2: self.m2 / self.n2_eff as f64 - mu * mu,
        }
    }
}

fn check_split(name: &'static str, s: usize, lo: usize, n: usize) -> Result<()> {
    if s < lo || s + 1 > n {
        return Err(Error::out_of_range(
            name,
            s,
            format!("s must be in [{lo}, n-1] with n = {n}"),
        ));
    }
    Ok(())
}

/// Full-sample maximum likelihood estimate; charges `2n` looks.
pub fn mle_estimate(sample: &[f64], ledger: &mut CostLedger) -> Result<MeanVar> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::out_of_range("n", n, ">= 2"));
    }
    ledger.charge_looks(2 * n as u64);
    Ok(MomentSums::over(sample, 0..n, 0..n).plug_in())
}

/// `σ²/n + 2σ⁴/n`.
pub fn mle_risk(params: &NormalParams, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::out_of_range("n", n, ">= 2"));
    }
    let n = n as f64;
    Ok(params.sigma2 / n + 2.0 * params.sigma2.powi(2) / n)
}

/// `M1 = Σ_{i<s} X_i`, `M2 = Σ_{i>=s} X_i²` (zero-based).
pub fn streaming_sums(sample: &[f64], s: usize) -> Result<MomentSums> {
    check_split("s", s, 1, sample.len())?;
    Ok(MomentSums::over(sample, 0..s, s..sample.len()))
}

/// Unbiased one-pass estimates from the split at `s`; charges `n` looks.
///
/// `μ̂ = M1/s` and `σ̂² = s/(s-1) · (M2/(n-s) - μ̂²)`, which is unbiased
/// because `E[μ̂²] = μ² + σ²/s` and `M1` and `M2` are independent.
pub fn streaming_estimate(sample: &[f64], s: usize, ledger: &mut CostLedger) -> Result<MeanVar> {
    let n = sample.len();
    check_split("s", s, 2, n)?;
    let sums = streaming_sums(sample, s)?;
    ledger.charge_looks(n as u64);
    let (sf, rest) = (s as f64, (n - s) as f64);
    let mu = sums.m1 / sf;
    let sigma2 = sf / ((sf - 1.0) * rest) * (sums.m2 - rest / (sf * sf) * sums.m1 * sums.m1);
    Ok(MeanVar { mu, sigma2 })
}

/// Exact risks `(R(μ̂ₛ), R(σ̂²ₛ))` of [`streaming_estimate`]:
/// `σ²/s` and `(4snμ²σ² + 2((s-1)s + n)σ⁴) / ((s-1)²(n-s))`.
pub fn streaming_risks(params: &NormalParams, n: usize, s: usize) -> Result<(f64, f64)> {
    check_split("s", s, 2, n)?;
    let NormalParams { mu, sigma2 } = *params;
    let (sf, nf) = (s as f64, n as f64);
    let risk_mu = sigma2 / sf;
    let num = 4.0 * sf * nf * mu * mu * sigma2 + 2.0 * ((sf - 1.0) * sf + nf) * sigma2 * sigma2;
    let risk_sigma2 = num / ((sf - 1.0).powi(2) * (nf - sf));
    Ok((risk_mu, risk_sigma2))
}

/// Maximum likelihood estimate given the split statistics; charges `n` looks.
pub fn streaming_mle_estimate(sample: &[f64], s: usize, ledger: &mut CostLedger) -> Result<MeanVar> {
    let sums = streaming_sums(sample, s)?;
    ledger.charge_looks(sample.len() as u64);
    Ok(sums.plug_in())
}

/// Large-`n` risk of the streaming estimators with `s = p n`:
/// `σ²(4μ² + 2pσ² - p + 1) / (n p (1-p))`.
pub fn asymptotic_streaming_risk(params: &NormalParams, n: usize, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::out_of_range("p", p, "(0, 1)"));
    }
    let NormalParams { mu, sigma2 } = *params;
    Ok(sigma2 * (4.0 * mu * mu + 2.0 * p * sigma2 - p + 1.0) / (n as f64 * p * (1.0 - p)))
}

/// Split fraction minimizing [`asymptotic_streaming_risk`].
pub fn optimal_split_p(params: &NormalParams) -> f64 {
    let m = 4.0 * params.mu * params.mu;
    let a = (m + 1.0).sqrt();
    a / ((m + 2.0 * params.sigma2).sqrt() + a)
}

/// Plug-in estimate from a mixed allocation; charges `n1 + n2 + 2 n12` looks.
///
/// The first `n1` points feed only `M1`, the next `n12` feed both sums and
/// the next `n2` feed only `M2`.
pub fn mixed_estimate(sample: &[f64], alloc: &Allocation, ledger: &mut CostLedger) -> Result<MeanVar> {
    alloc.check_nondegenerate()?;
    alloc.check_within(sample.len() as u64)?;
    let (n1, n2, n12) = (alloc.n1 as usize, alloc.n2 as usize, alloc.n12 as usize);
    let sums = MomentSums::over(sample, 0..n1 + n12, n1..n1 + n12 + n2);
    ledger.charge_looks(alloc.looks());
    Ok(sums.plug_in())
}

/// Large-`n` covariance of `(μ̂, σ̂²)` from [`mixed_estimate`].
pub fn mixed_asymptotic_cov(params: &NormalParams, alloc: &Allocation) -> Result<Matrix2<f64>> {
    alloc.check_nondegenerate()?;
    let NormalParams { mu, sigma2 } = *params;
    let a = alloc.first_size() as f64;
    let b = alloc.second_size() as f64;
    let (n1, n2) = (alloc.n1 as f64, alloc.n2 as f64);
    let var_mu = sigma2 / a;
    let cov = -2.0 * n2 * mu * sigma2 / (a * b);
    let var_s2 = (2.0 * a * sigma2 * sigma2 + 4.0 * (n1 + n2) * mu * mu * sigma2) / (a * b);
    Ok(Matrix2::new(var_mu, cov, cov, var_s2))
}

/// Trace of [`mixed_asymptotic_cov`].
pub fn mixed_asymptotic_risk(params: &NormalParams, alloc: &Allocation) -> Result<f64> {
    Ok(mixed_asymptotic_cov(params, alloc)?.trace())
}

fn risk_unchecked(params: &NormalParams, n1: u64, n2: u64, n12: u64) -> f64 {
    let NormalParams { mu, sigma2 } = *params;
    let a = (n1 + n12) as f64;
    let b = (n2 + n12) as f64;
    sigma2 / a + (2.0 * a * sigma2 * sigma2 + 4.0 * (n1 + n2) as f64 * mu * mu * sigma2) / (a * b)
}

/// How to choose among allocations whose risks tie.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Prefer larger `n12`, then larger `n1`.
    #[default]
    MaxOverlap,
    /// Prefer smaller `n12`, then larger `n1`.
    MinOverlap,
}

const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    risk: f64,
    alloc: Allocation,
}

impl Candidate {
    fn beats(&self, other: &Candidate, tie: TieBreak) -> bool {
        let tol = TIE_RTOL * other.risk.abs();
        if self.risk < other.risk - tol {
            return true;
        }
        if self.risk > other.risk + tol {
            return false;
        }
        let (a, b) = (self.alloc, other.alloc);
        match tie {
            TieBreak::MaxOverlap => (a.n12, a.n1) > (b.n12, b.n1),
            TieBreak::MinOverlap => (std::cmp::Reverse(a.n12), a.n1) > (std::cmp::Reverse(b.n12), b.n1),
        }
    }
}

fn check_budget(n: usize, budget: u64) -> Result<()> {
    if n < 1 || budget < 2 || budget > 2 * n as u64 {
        return Err(Error::InfeasibleBudget {
            budget: budget as f64,
            reason: format!("budget must be in [2, 2n] with n = {n}"),
        });
    }
    Ok(())
}

/// Best allocation at each exact look count `0..=max_budget`.
fn best_by_exact_cost(params: &NormalParams, n: usize, max_budget: u64, tie: TieBreak) -> Vec<Option<Candidate>> {
    let n = n as u64;
    let mut best: Vec<Option<Candidate>> = vec![None; max_budget as usize + 1];
    for n12 in 0..=n.min(max_budget / 2) {
        for n1 in 0..=(n - n12).min(max_budget - 2 * n12) {
            let n2_max = (n - n12 - n1).min(max_budget - 2 * n12 - n1);
            for n2 in 0..=n2_max {
                if n1 + n12 == 0 || n2 + n12 == 0 {
                    continue;
                }
                let cand = Candidate {
                    risk: risk_unchecked(params, n1, n2, n12),
                    alloc: Allocation::new(n1, n2, n12),
                };
                let slot = &mut best[(n1 + n2 + 2 * n12) as usize];
                if slot.is_none_or(|b| cand.beats(&b, tie)) {
                    *slot = Some(cand);
                }
            }
        }
    }
    best
}

/// Exhaustive minimizer of [`mixed_asymptotic_risk`] over integer allocations
/// with `n1 + n2 + 2 n12 <= budget` and `n1 + n2 + n12 <= n`.
pub fn optimal_allocation(params: &NormalParams, n: usize, budget: u64) -> Result<Allocation> {
    optimal_allocation_with(params, n, budget, TieBreak::default())
}

pub fn optimal_allocation_with(params: &NormalParams, n: usize, budget: u64, tie: TieBreak) -> Result<Allocation> {
    check_budget(n, budget)?;
    let best = best_by_exact_cost(params, n, budget, tie);
    prefix_best(&best, budget as usize, tie)
        .map(|c| c.alloc)
        .ok_or_else(|| Error::InfeasibleBudget {
            budget: budget as f64,
            reason: "no feasible allocation".into(),
        })
}

fn prefix_best(best: &[Option<Candidate>], upto: usize, tie: TieBreak) -> Option<Candidate> {
    best[..=upto]
        .iter()
        .flatten()
        .fold(None, |acc: Option<Candidate>, c| match acc {
            Some(a) if !c.beats(&a, tie) => Some(a),
            _ => Some(*c),
        })
}

/// Fast approximate optimizer for large `n`: coarse search over a strided
/// grid of proportions, then integer pattern search with a shrinking step.
pub fn optimal_allocation_relaxed(params: &NormalParams, n: usize, budget: u64) -> Result<Allocation> {
    check_budget(n, budget)?;
    let nn = n as u64;
    let feasible =
        |a: &Allocation| a.looks() <= budget && a.samples_used() <= nn && a.first_size() > 0 && a.second_size() > 0;
    let risk = |a: &Allocation| risk_unchecked(params, a.n1, a.n2, a.n12);

    let grid = 64u64;
    let step = (budget / grid).max(1);
    let mut best: Option<(f64, Allocation)> = None;
    let consider = |a: Allocation, best: &mut Option<(f64, Allocation)>| {
        if feasible(&a) {
            let r = risk(&a);
            if best.is_none_or(|(br, _)| r < br) {
                *best = Some((r, a));
            }
        }
    };
    let mut n12 = 0;
    while 2 * n12 <= budget {
        let mut n1 = 0;
        while n1 + 2 * n12 <= budget {
            // spend whatever remains on n2, capped by n
            let n2 = (budget - 2 * n12 - n1).min(nn.saturating_sub(n12 + n1));
            consider(Allocation::new(n1, n2, n12), &mut best);
            consider(Allocation::new(n1, 0, n12), &mut best);
            n1 += step;
        }
        n12 += step;
    }
    consider(Allocation::new(0, 0, (budget / 2).min(nn)), &mut best);
    let (mut best_risk, mut cur) = best.ok_or_else(|| Error::InfeasibleBudget {
        budget: budget as f64,
        reason: "no feasible allocation".into(),
    })?;

    let moves: Vec<(i64, i64, i64)> = (-2i64..=2)
        .flat_map(|a| (-2i64..=2).flat_map(move |b| (-2i64..=2).map(move |c| (a, b, c))))
        .filter(|&m| m != (0, 0, 0))
        .collect();
    let mut h = step as i64;
    while h >= 1 {
        loop {
            let mut improved = false;
            for &(d1, d2, d12) in &moves {
                let next = [cur.n1 as i64 + h * d1, cur.n2 as i64 + h * d2, cur.n12 as i64 + h * d12];
                if next.iter().any(|&v| v < 0) {
                    continue;
                }
                let cand = Allocation::new(next[0] as u64, next[1] as u64, next[2] as u64);
                if feasible(&cand) {
                    let r = risk(&cand);
                    if r < best_risk * (1.0 - TIE_RTOL) {
                        best_risk = r;
                        cur = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        h /= 2;
    }
    Ok(cur)
}

/// One budget on the risk/computation frontier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub budget: u64,
    pub alloc: Allocation,
    pub risk: f64,
    pub risk_mu: f64,
    pub risk_sigma2: f64,
}

/// Optimal allocations and risks across a sorted list of budgets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierCurve {
    pub params: NormalParams,
    pub n: usize,
    pub points: Vec<FrontierPoint>,
}

/// Exact frontier for every budget in `budgets` (sorted ascending).
pub fn frontier(params: &NormalParams, n: usize, budgets: &[u64]) -> Result<FrontierCurve> {
    frontier_with(params, n, budgets, TieBreak::default())
}

pub fn frontier_with(params: &NormalParams, n: usize, budgets: &[u64], tie: TieBreak) -> Result<FrontierCurve> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::out_of_range(
            "budgets",
            format!("{budgets:?}"),
            "sorted ascending",
        ));
    }
    for &b in budgets {
        check_budget(n, b)?;
    }
    let Some(&max_budget) = budgets.last() else {
        return Ok(FrontierCurve {
            params: *params,
            n,
            points: Vec::new(),
        });
    };
    let best = best_by_exact_cost(params, n, max_budget, tie);
    let mut points = Vec::with_capacity(budgets.len());
    // running best over exact costs, advanced as the budget grows
    let mut running: Option<Candidate> = None;
    let mut upto = 0usize;
    for &b in budgets {
        while upto <= b as usize {
            if let Some(c) = best[upto] {
                if running.is_none_or(|r| c.beats(&r, tie)) {
                    running = Some(c);
                }
            }
            upto += 1;
        }
        let c = running.ok_or_else(|| Error::InfeasibleBudget {
            budget: b as f64,
            reason: "no feasible allocation".into(),
        })?;
        let cov = mixed_asymptotic_cov(params, &c.alloc)?;
        points.push(FrontierPoint {
            budget: b,
            alloc: c.alloc,
            risk: c.risk,
            risk_mu: cov[(0, 0)],
            risk_sigma2: cov[(1, 1)],
        });
    }
    Ok(FrontierCurve {
        params: *params,
        n,
        points,
    })
}

impl FrontierCurve {
    /// `(n1/n, n2/n, n12/n)` at every point.
    pub fn proportions(&self) -> Vec<[f64; 3]> {
        let n = self.n as f64;
        self.points
            .iter()
            .map(|p| [p.alloc.n1 as f64 / n, p.alloc.n2 as f64 / n, p.alloc.n12 as f64 / n])
            .collect()
    }

    /// Budgets where some proportion path changes direction (rising, flat,
    /// falling). Directions come from least-squares slopes over sliding
    /// windows of `window` points so that integer rounding does not register
    /// as a change; changes closer than one window are merged.
    pub fn breakpoints(&self, window: usize) -> Vec<u64> {
        const FLAT: f64 = 0.05;
        let props = self.proportions();
        let w = window.max(2);
        if props.len() <= w {
            return Vec::new();
        }
        let n = self.n as f64;
        let xs: Vec<f64> = self.points.iter().map(|p| p.budget as f64 / n).collect();
        let slope = |i: usize, comp: usize| {
            let k = w as f64;
            let mx = xs[i..i + w].iter().sum::<f64>() / k;
            let my = props[i..i + w].iter().map(|p| p[comp]).sum::<f64>() / k;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for j in i..i + w {
                sxy += (xs[j] - mx) * (props[j][comp] - my);
                sxx += (xs[j] - mx).powi(2);
            }
            sxy / sxx
        };
        let mut changes: Vec<usize> = Vec::new();
        for comp in 0..3 {
            let mut last: Option<i8> = None;
            for i in 0..=props.len() - w {
                let b = slope(i, comp);
                let class = if b > FLAT {
                    1
                } else if b < -FLAT {
                    -1
                } else {
                    0
                };
                if last.is_some_and(|prev| prev != class) {
                    changes.push(i + w / 2);
                }
                last = Some(class);
            }
        }
        changes.sort_unstable();
        let mut merged: Vec<usize> = Vec::new();
        for c in changes {
            if merged.last().is_none_or(|&m| c > m + w) {
                merged.push(c);
            }
        }
        merged.into_iter().map(|i| self.points[i].budget).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(mu: f64, sigma2: f64) -> NormalParams {
        NormalParams::new(mu, sigma2).unwrap()
    }

    #[test]
    fn mle_hand_cases() {
        let mut l = CostLedger::new();
        let e = mle_estimate(&[1.0, 1.0, 1.0], &mut l).unwrap();
        assert_eq!((e.mu, e.sigma2), (1.0, 0.0));
        assert_eq!(l.grand_total(), 6);
        let mut l = CostLedger::new();
        let e = mle_estimate(&[0.0, 2.0], &mut l).unwrap();
        assert_eq!((e.mu, e.sigma2), (1.0, 1.0));
        assert_eq!(l.grand_total(), 4);
        assert!(mle_estimate(&[1.0], &mut l).is_err());
    }

    #[test]
    fn mle_risk_values() {
        assert_relative_eq!(mle_risk(&p(0.0, 1.0), 100).unwrap(), 0.03, max_relative = 1e-14);
        assert_relative_eq!(mle_risk(&p(0.0, 0.5), 100).unwrap(), 0.01, max_relative = 1e-14);
        let r1 = mle_risk(&p(2.0, 1.3), 50).unwrap();
        let r2 = mle_risk(&p(2.0, 1.3), 100).unwrap();
        assert_relative_eq!(r2, r1 / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn streaming_hand_case() {
        let x = [2.0, 2.0, 3.0, 3.0];
        let mut l = CostLedger::new();
        let e = streaming_estimate(&x, 2, &mut l).unwrap();
        // M1 = 4, M2 = 18: 2/(1*2) * (18 - (2/4) * 16) = 10
        assert_eq!((e.mu, e.sigma2), (2.0, 10.0));
        assert_eq!(l.grand_total(), 4);
        let mut l = CostLedger::new();
        let e = streaming_mle_estimate(&x, 2, &mut l).unwrap();
        assert_eq!((e.mu, e.sigma2), (2.0, 5.0));
        assert_eq!(l.grand_total(), 4);
    }

    #[test]
    fn streaming_split_bounds() {
        let x = [1.0; 10];
        let mut l = CostLedger::new();
        assert!(streaming_estimate(&x, 1, &mut l).is_err());
        assert!(streaming_estimate(&x, 10, &mut l).is_err());
        assert!(streaming_estimate(&x, 9, &mut l).is_ok());
        assert!(streaming_mle_estimate(&x, 1, &mut l).is_ok());
        assert!(streaming_mle_estimate(&x, 0, &mut l).is_err());
        assert!(streaming_risks(&p(0.0, 1.0), 10, 1).is_err());
    }

    #[test]
    fn streaming_risk_values() {
        let (rm, rs) = streaming_risks(&p(0.0, 1.0), 100, 50).unwrap();
        assert_relative_eq!(rm, 0.02, max_relative = 1e-14);
        assert_relative_eq!(rs, 5100.0 / 120050.0, max_relative = 1e-14);
        let (_, rs) = streaming_risks(&p(1.0, 1.0), 100, 50).unwrap();
        assert_relative_eq!(rs, 25100.0 / 120050.0, max_relative = 1e-14);
        let (a, _) = streaming_risks(&p(1.0, 2.0), 400, 50).unwrap();
        let (b, _) = streaming_risks(&p(1.0, 2.0), 400, 100).unwrap();
        assert_relative_eq!(b, a / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn asymptotic_risk_values() {
        assert_relative_eq!(
            asymptotic_streaming_risk(&p(0.0, 1.0), 100, 0.5).unwrap(),
            0.06,
            max_relative = 1e-14
        );
        let (rm, rs) = streaming_risks(&p(1.0, 1.0), 10_000, 5000).unwrap();
        let asym = asymptotic_streaming_risk(&p(1.0, 1.0), 10_000, 0.5).unwrap();
        assert!(((rm + rs) - asym).abs() / asym < 0.05);
        assert!(asymptotic_streaming_risk(&p(0.0, 1.0), 100, 0.0).is_err());
        assert!(asymptotic_streaming_risk(&p(0.0, 1.0), 100, 1.0).is_err());
        let near0 = asymptotic_streaming_risk(&p(0.0, 1.0), 100, 1e-9).unwrap();
        let near1 = asymptotic_streaming_risk(&p(0.0, 1.0), 100, 1.0 - 1e-9).unwrap();
        assert!(near0 > 1e6 && near1 > 1e6);
    }

    #[test]
    fn optimal_split_values() {
        assert_relative_eq!(
            optimal_split_p(&p(0.0, 1.0)),
            1.0 / (2f64.sqrt() + 1.0),
            max_relative = 1e-14
        );
        assert_eq!(optimal_split_p(&p(0.0, 0.5)), 0.5);
        assert!((optimal_split_p(&p(1e4, 1.0)) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn optimal_split_is_grid_argmin() {
        for mu in [0.0, 0.5, 1.0, 2.0] {
            for sd in [0.5, 1.0, 2.0] {
                let prm = p(mu, sd * sd);
                let argmin = (1..10_000)
                    .map(|i| i as f64 * 1e-4)
                    .min_by(|a, b| {
                        let ra = asymptotic_streaming_risk(&prm, 100, *a).unwrap();
                        let rb = asymptotic_streaming_risk(&prm, 100, *b).unwrap();
                        ra.total_cmp(&rb)
                    })
                    .unwrap();
                assert!((argmin - optimal_split_p(&prm)).abs() <= 2e-4, "mu={mu} sd={sd}");
            }
        }
    }

    #[test]
    fn mixed_reductions_are_exact() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 / 13.0 - 3.0).collect();
        let n = x.len() as u64;
        let mut l1 = CostLedger::new();
        let mut l2 = CostLedger::new();
        assert_eq!(
            mixed_estimate(&x, &Allocation::full(n), &mut l1).unwrap(),
            mle_estimate(&x, &mut l2).unwrap()
        );
        assert_eq!(l1, l2);
        for s in 1..x.len() {
            let a = mixed_estimate(&x, &Allocation::streaming(n, s as u64), &mut l1).unwrap();
            let b = streaming_mle_estimate(&x, s, &mut l2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mixed_cost_and_errors() {
        let x = vec![0.5; 60];
        let mut l = CostLedger::new();
        mixed_estimate(&x, &Allocation::new(10, 20, 30), &mut l).unwrap();
        assert_eq!(l.grand_total(), 90);
        assert!(mixed_estimate(&x, &Allocation::new(10, 20, 31), &mut l).is_err());
        assert!(mixed_estimate(&x, &Allocation::new(10, 0, 0), &mut l).is_err());
        assert!(mixed_asymptotic_cov(&p(0.0, 1.0), &Allocation::new(0, 4, 0)).is_err());
    }

    #[test]
    fn mixed_cov_reduces_to_mle() {
        let prm = p(0.7, 1.9);
        let c = mixed_asymptotic_cov(&prm, &Allocation::full(80)).unwrap();
        assert_relative_eq!(c[(0, 0)], 1.9 / 80.0, max_relative = 1e-14);
        assert_relative_eq!(c[(1, 1)], 2.0 * 1.9 * 1.9 / 80.0, max_relative = 1e-14);
        assert_eq!(c[(0, 1)], 0.0);
        assert_relative_eq!(
            mixed_asymptotic_risk(&prm, &Allocation::full(80)).unwrap(),
            mle_risk(&prm, 80).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mixed_trace_matches_streaming_asymptotics() {
        for (mu, s2) in [(0.0, 1.0), (1.0, 1.0), (0.3, 2.5)] {
            let prm = p(mu, s2);
            let n = 1000u64;
            for s in [100u64, 414, 500, 900] {
                let tr = mixed_asymptotic_risk(&prm, &Allocation::streaming(n, s)).unwrap();
                let explicit = s2 / s as f64
                    + 2.0 * s2 * s2 / (n - s) as f64
                    + 4.0 * n as f64 * mu * mu * s2 / (s as f64 * (n - s) as f64);
                let asym = asymptotic_streaming_risk(&prm, n as usize, s as f64 / n as f64).unwrap();
                assert_relative_eq!(tr, explicit, max_relative = 1e-12);
                assert_relative_eq!(tr, asym, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn table_regime_snr_at_least_one() {
        for prm in [p(1.0, 1.0), p(2.0, 1.0), p(1.0, 0.25)] {
            for c in (2..=60).step_by(2) {
                assert_eq!(optimal_allocation(&prm, 30, c).unwrap(), Allocation::new(0, 0, c / 2));
            }
        }
    }

    #[test]
    fn budget_bounds() {
        assert!(optimal_allocation(&p(0.0, 1.0), 10, 1).is_err());
        assert!(optimal_allocation(&p(0.0, 1.0), 10, 21).is_err());
        assert!(optimal_allocation(&p(0.0, 1.0), 10, 20).is_ok());
    }

    #[test]
    fn frontier_full_budget_is_mle() {
        let prm = p(0.4, 0.8);
        let f = frontier(&prm, 50, &[100]).unwrap();
        assert_eq!(f.points[0].alloc, Allocation::full(50));
        assert_relative_eq!(f.points[0].risk, mle_risk(&prm, 50).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn frontier_matches_pointwise_optimum() {
        let prm = p(0.1, 0.25);
        let budgets: Vec<u64> = (2..=80).collect();
        let f = frontier(&prm, 40, &budgets).unwrap();
        for pt in &f.points {
            assert_eq!(
                pt.alloc,
                optimal_allocation(&prm, 40, pt.budget).unwrap(),
                "budget {}",
                pt.budget
            );
        }
        assert!(f.points.windows(2).all(|w| w[1].risk <= w[0].risk));
        assert!(frontier(&prm, 40, &[10, 4]).is_err());
    }

    #[test]
    fn relaxed_matches_exhaustive() {
        for prm in [p(0.1, 0.25), p(0.0, 1.0), p(1.0, 1.0), p(0.5, 3.0), p(0.3, 0.7)] {
            for c in [7u64, 40, 101, 250, 333, 399, 400] {
                let exact = optimal_allocation(&prm, 200, c).unwrap();
                let fast = optimal_allocation_relaxed(&prm, 200, c).unwrap();
                let re = mixed_asymptotic_risk(&prm, &exact).unwrap();
                let rf = mixed_asymptotic_risk(&prm, &fast).unwrap();
                assert!(rf <= re * (1.0 + 1e-3), "{prm:?} c={c}: {exact} {re} vs {fast} {rf}");
            }
        }
    }

    #[test]
    fn relaxed_scales_to_large_n() {
        let prm = p(0.1, 0.25);
        let a = optimal_allocation_relaxed(&prm, 100_000, 150_000).unwrap();
        assert!(a.looks() <= 150_000 && a.samples_used() <= 100_000);
        assert_eq!(a.n2, 0);
        assert!(a.n1 > 0);
    }

    #[test]
    fn zero_snr_change_points_depend_on_tie_rule() {
        let prm = p(0.0, 1.0);
        let n = 200;
        let budgets: Vec<u64> = (2..=2 * n as u64).collect();
        let min = frontier_with(&prm, n, &budgets, TieBreak::MinOverlap).unwrap();
        let max = frontier_with(&prm, n, &budgets, TieBreak::MaxOverlap).unwrap();
        let bp_min = min.breakpoints(40);
        let bp_max = max.breakpoints(40);
        assert_eq!(bp_min.len(), 2, "{bp_min:?}");
        assert_eq!(bp_max.len(), 1, "{bp_max:?}");
        for (a, b) in min.points.iter().zip(&max.points) {
            assert_relative_eq!(a.risk, b.risk, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn covariance_symmetric_positive_diagonal(mu in -3.0f64..3.0, s2 in 0.01f64..5.0,
                                                  n1 in 0u64..500, n2 in 0u64..500, n12 in 0u64..500) {
            let a = Allocation::new(n1, n2, n12);
            prop_assume!(a.check_nondegenerate().is_ok());
            let c = mixed_asymptotic_cov(&p(mu, s2), &a).unwrap();
            prop_assert_eq!(c[(0, 1)], c[(1, 0)]);
            prop_assert!(c[(0, 0)] > 0.0 && c[(1, 1)] > 0.0);
        }
    }
}
