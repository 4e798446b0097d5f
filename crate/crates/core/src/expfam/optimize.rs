use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::{Serialize, SerializeStruct, Serializer};

use super::{ExponentialFamily, RiskKernel, Target};
use crate::cost::{check_unit_costs, GeneralAllocation};
use crate::error::{Error, Result};

const TIE_RTOL: f64 = 1e-12;
const BUDGET_SLACK: f64 = 1e-9;

/// An integer allocation with its cost and risk.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedAllocation {
    pub alloc: GeneralAllocation,
    pub cost: f64,
    pub risk: f64,
}

impl Serialize for OptimizedAllocation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let overlaps: Vec<[u64; 3]> = self
            .alloc
            .overlaps()
            .into_iter()
            .map(|(k, l, o)| [k as u64, l as u64, o])
            .collect();
        let mut s = serializer.serialize_struct("OptimizedAllocation", 4)?;
        s.serialize_field("sizes", &self.alloc.sizes())?;
        s.serialize_field("overlaps", &overlaps)?;
        s.serialize_field("cost", &self.cost)?;
        s.serialize_field("risk", &self.risk)?;
        s.end()
    }
}

/// Settings for the relaxed optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            max_iters: 400,
        }
    }
}

fn check_problem(family: &dyn ExponentialFamily, budget: f64, n: u64) -> Result<Vec<f64>> {
    let costs = family.unit_costs();
    check_unit_costs(&costs)?;
    let min_cost: f64 = costs.iter().sum();
    if n == 0 {
        return Err(Error::InfeasibleBudget {
            budget,
            reason: "no samples available".into(),
        });
    }
    if !(budget + BUDGET_SLACK >= min_cost) {
        return Err(Error::InfeasibleBudget {
            budget,
            reason: format!("every statistic needs a sample; minimum cost is {min_cost}"),
        });
    }
    Ok(costs)
}

fn finish(
    family: &dyn ExponentialFamily,
    kernel: &RiskKernel,
    alloc: GeneralAllocation,
) -> Result<OptimizedAllocation> {
    let cost = alloc.cost(&family.unit_costs())?;
    let sizes: Vec<f64> = alloc.sizes().iter().map(|&s| s as f64).collect();
    let risk = kernel.risk(&sizes, |k, l| alloc.overlap(k, l) as f64);
    Ok(OptimizedAllocation { alloc, cost, risk })
}

/// Minimize `tr(Q η̇ Σ η̇ᵀ)` subject to `Σ c_k |S_k| <= budget` and at most
/// `n` samples. One statistic is solved in closed form, two by exhaustive
/// search, more by [`optimize_allocation_relaxed`] with default options.
pub fn optimize_allocation(
    family: &dyn ExponentialFamily,
    tau: &DVector<f64>,
    target: &Target,
    budget: f64,
    n: u64,
) -> Result<OptimizedAllocation> {
    match family.dim() {
        1 => {
            let costs = check_problem(family, budget, n)?;
            let kernel = RiskKernel::new(family, tau, target)?;
            let size = ((budget / costs[0] + BUDGET_SLACK).floor() as u64).min(n);
            finish(family, &kernel, GeneralAllocation::full(1, size))
        }
        2 => exhaustive_pair_allocation(family, tau, target, budget, n),
        _ => optimize_allocation_relaxed(family, tau, target, budget, n, &RelaxationOptions::default()),
    }
}

/// Exact optimum for two statistics over all `(n1, n2, n12)`. Ties go to the
/// larger overlap, then the larger `n1`.
pub fn exhaustive_pair_allocation(
    family: &dyn ExponentialFamily,
    tau: &DVector<f64>,
    target: &Target,
    budget: f64,
    n: u64,
) -> Result<OptimizedAllocation> {
    if family.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: "2 statistics".into(),
            found: family.dim().to_string(),
        });
    }
    let c = check_problem(family, budget, n)?;
    let kernel = RiskKernel::new(family, tau, target)?;
    let (a11, a22, a12) = (kernel.a[(0, 0)], kernel.a[(1, 1)], kernel.a[(0, 1)]);
    let mut best: Option<(f64, u64, u64, u64)> = None;
    let max_n12 = ((budget / (c[0] + c[1]) + BUDGET_SLACK).floor() as u64).min(n);
    for n12 in 0..=max_n12 {
        let left = budget - (c[0] + c[1]) * n12 as f64;
        let max_n1 = ((left / c[0] + BUDGET_SLACK).floor() as u64).min(n - n12);
        for n1 in 0..=max_n1 {
            let rest = left - c[0] * n1 as f64;
            let max_n2 = ((rest / c[1] + BUDGET_SLACK).floor() as u64).min(n - n12 - n1);
            for n2 in 0..=max_n2 {
                let (s1, s2) = ((n1 + n12) as f64, (n2 + n12) as f64);
                if s1 == 0.0 || s2 == 0.0 {
                    continue;
                }
                let r = a11 / s1 + a22 / s2 + 2.0 * a12 * n12 as f64 / (s1 * s2);
                let better = match best {
                    None => true,
                    Some((br, b1, _, b12)) => {
                        let tol = TIE_RTOL * br.abs();
                        r < br - tol || (r <= br + tol && (n12, n1) > (b12, b1))
                    }
                };
                if better {
                    best = Some((r, n1, n2, n12));
                }
            }
        }
    }
    let (_, n1, n2, n12) = best.ok_or_else(|| Error::InfeasibleBudget {
        budget,
        reason: "no feasible allocation".into(),
    })?;
    let alloc = GeneralAllocation::new(2)
        .with_region(0b01, n1)
        .with_region(0b10, n2)
        .with_region(0b11, n12);
    finish(family, &kernel, alloc)
}

/// Region masks searched by the relaxed optimizer: every region for up to six
/// statistics, otherwise singletons, pairs and the full mask.
fn search_masks(p: usize) -> Vec<u32> {
    let full = GeneralAllocation::full_mask(p);
    if p <= 6 {
        return (1..=full).collect();
    }
    let mut masks: Vec<u32> = (0..p).map(|k| 1 << k).collect();
    for k in 0..p {
        for l in k + 1..p {
            masks.push((1 << k) | (1 << l));
        }
    }
    masks.push(full);
    masks
}

/// The relaxed problem over region counts.
struct Relaxed<'a> {
    kernel: &'a RiskKernel,
    masks: Vec<u32>,
    members: Vec<Vec<usize>>,
    weights: Vec<f64>,
    budget: f64,
    n: f64,
    p: usize,
}

impl<'a> Relaxed<'a> {
    fn new(kernel: &'a RiskKernel, costs: &[f64], budget: f64, n: u64) -> Self {
        let p = kernel.dim();
        let masks = search_masks(p);
        let members: Vec<Vec<usize>> = masks
            .iter()
            .map(|&m| (0..p).filter(|k| m & (1 << k) != 0).collect())
            .collect();
        let weights = members.iter().map(|ks| ks.iter().map(|&k| costs[k]).sum()).collect();
        Self {
            kernel,
            masks,
            members,
            weights,
            budget,
            n: n as f64,
            p,
        }
    }

    /// Sizes and the full overlap table from region counts.
    fn tables(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.p;
        let mut o = vec![0.0; p * p];
        for (ks, &v) in self.members.iter().zip(x) {
            if v == 0.0 {
                continue;
            }
            for &k in ks {
                for &l in ks {
                    o[k * p + l] += v;
                }
            }
        }
        let s = (0..p).map(|k| o[k * p + k]).collect();
        (s, o)
    }

    fn risk(&self, x: &[f64]) -> f64 {
        let (s, o) = self.tables(x);
        if s.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        self.kernel.risk(&s, |k, l| o[k * self.p + l])
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = self.p;
        let a = &self.kernel.a;
        let (s, o) = self.tables(x);
        let mut ds = vec![0.0; p];
        for k in 0..p {
            ds[k] = -a[(k, k)] / (s[k] * s[k]);
            for l in 0..p {
                if l != k {
                    ds[k] -= 2.0 * a[(k, l)] * o[k * p + l] / (s[k] * s[k] * s[l]);
                }
            }
        }
        self.members
            .iter()
            .map(|ks| {
                let mut g = 0.0;
                for (i, &k) in ks.iter().enumerate() {
                    g += ds[k];
                    for &l in &ks[i + 1..] {
                        g += 2.0 * a[(k, l)] / (s[k] * s[l]);
                    }
                }
                g
            })
            .collect()
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        let ones = vec![1.0; y.len()];
        let mut x = y.to_vec();
        let mut pa = vec![0.0; y.len()];
        let mut pb = vec![0.0; y.len()];
        for _ in 0..200 {
            let ya: Vec<f64> = x.iter().zip(&pa).map(|(a, b)| a + b).collect();
            let xa = project_halfspace_nonneg(&ya, &self.weights, self.budget);
            for i in 0..x.len() {
                pa[i] = ya[i] - xa[i];
            }
            let yb: Vec<f64> = xa.iter().zip(&pb).map(|(a, b)| a + b).collect();
            let xb = project_halfspace_nonneg(&yb, &ones, self.n);
            for i in 0..x.len() {
                pb[i] = yb[i] - xb[i];
            }
            let change = xb.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = xb;
            if change <= 1e-12 * self.n.max(1.0) {
                break;
            }
        }
        x
    }

    /// Projected gradient descent with backtracking from `x0`.
    fn descend(&self, x0: Vec<f64>, max_iters: usize) -> Vec<f64> {
        let mut x = self.project(&x0);
        let mut r = self.risk(&x);
        let mut step = 1.0;
        let mut first = true;
        for _ in 0..max_iters {
            let g = self.gradient(&x);
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax == 0.0 || !r.is_finite() {
                break;
            }
            if first {
                step = 0.1 * x.iter().sum::<f64>().max(1.0) / gmax;
                first = false;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let xn = self.project(&trial);
                let rn = self.risk(&xn);
                let decrease: f64 = g.iter().zip(x.iter().zip(&xn)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if rn.is_finite() && rn <= r - 1e-4 * decrease && rn < r {
                    let rel = (r - rn) / r;
                    x = xn;
                    r = rn;
                    step *= 2.0;
                    accepted = rel > 1e-13;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        x
    }

    fn int_risk(&self, x: &[u64]) -> f64 {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        self.risk(&xf)
    }

    fn int_feasible(&self, x: &[u64]) -> bool {
        let cost: f64 = x.iter().zip(&self.weights).map(|(&v, w)| v as f64 * w).sum();
        let used: u64 = x.iter().sum();
        cost <= self.budget + BUDGET_SLACK && used as f64 <= self.n
    }

    /// Round down, restore empty statistics, then improve by integer local
    /// search over single-region and transfer moves with a shrinking step.
    fn round_and_repair(&self, x: &[f64]) -> Option<(f64, Vec<u64>)> {
        let mut xi: Vec<u64> = x.iter().map(|v| v.max(0.0).floor() as u64).collect();
        let (s, _) = self.tables(&xi.iter().map(|&v| v as f64).collect::<Vec<_>>());
        for k in 0..self.p {
            if s[k] == 0.0 {
                let idx = self
                    .masks
                    .iter()
                    .position(|&m| m == 1 << k)
                    .expect("singleton masks are searched");
                xi[idx] += 1;
            }
        }
        if !self.int_feasible(&xi) {
            xi = vec![0; self.masks.len()];
            let full = self.masks.len() - 1;
            xi[full] = 1;
            if !self.int_feasible(&xi) {
                return None;
            }
        }
        let mut r = self.int_risk(&xi);
        let regions = xi.len();
        let total: u64 = xi.iter().sum();
        let mut h = (total / 32).max(1);
        loop {
            loop {
                let mut best: Option<(f64, Vec<u64>)> = None;
                let try_move = |cand: Vec<u64>, best: &mut Option<(f64, Vec<u64>)>| {
                    if self.int_feasible(&cand) {
                        let rc = self.int_risk(&cand);
                        if rc < r * (1.0 - TIE_RTOL) && best.as_ref().is_none_or(|(b, _)| rc < *b) {
                            *best = Some((rc, cand));
                        }
                    }
                };
                for i in 0..regions {
                    let mut up = xi.clone();
                    up[i] += h;
                    try_move(up, &mut best);
                    if xi[i] >= h {
                        let mut dn = xi.clone();
                        dn[i] -= h;
                        try_move(dn.clone(), &mut best);
                        for j in 0..regions {
                            if j != i {
                                let mut t = dn.clone();
                                t[j] += h;
                                try_move(t.clone(), &mut best);
                                if regions <= 15 {
                                    for k in j..regions {
                                        if k != i {
                                            let mut t2 = t.clone();
                                            t2[k] += h;
                                            try_move(t2, &mut best);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                match best {
                    Some((rb, xb)) => {
                        r = rb;
                        xi = xb;
                    }
                    None => break,
                }
            }
            if h == 1 {
                break;
            }
            h /= 2;
        }
        Some((r, xi))
    }

    fn to_alloc(&self, xi: &[u64]) -> GeneralAllocation {
        let mut a = GeneralAllocation::new(self.p);
        for (&m, &v) in self.masks.iter().zip(xi) {
            a.set_region(m, v);
        }
        a
    }

    fn starts(&self, opts: &RelaxationOptions) -> Vec<Vec<f64>> {
        let r = self.masks.len();
        let mut out = Vec::with_capacity(opts.starts.max(2));
        // everything shared
        let mut full = vec![0.0; r];
        full[r - 1] = (self.budget / self.weights[r - 1]).min(self.n);
        out.push(full);
        // equal cost share on disjoint sets
        let mut disjoint = vec![0.0; r];
        for k in 0..self.p {
            let idx = self
                .masks
                .iter()
                .position(|&m| m == 1 << k)
                .expect("singleton masks are searched");
            disjoint[idx] = self.budget / (self.p as f64 * self.weights[idx]);
        }
        out.push(disjoint);
        for i in 2..opts.starts.max(2) {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let raw: Vec<f64> = (0..r).map(|_| rng.random::<f64>() + 1e-3).collect();
            let cost: f64 = raw.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
            out.push(raw.iter().map(|v| v * self.budget / cost).collect());
        }
        out
    }
}

/// `{x >= 0, a·x <= b}` projection for positive `a`, by bisection on the
/// multiplier.
fn project_halfspace_nonneg(y: &[f64], a: &[f64], b: f64) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let dot = |x: &[f64]| x.iter().zip(a).map(|(u, v)| u * v).sum::<f64>();
    if dot(&clipped) <= b {
        return clipped;
    }
    let shifted = |lam: f64| -> Vec<f64> { y.iter().zip(a).map(|(v, w)| (v - lam * w).max(0.0)).collect() };
    let mut lo = 0.0;
    let mut hi = y.iter().zip(a).map(|(v, w)| v / w).fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dot(&shifted(mid)) > b {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    shifted(hi)
}

/// Continuous relaxation over region counts solved by projected gradient
/// descent from several starts (in parallel), each rounded and repaired to an
/// integer allocation. The best integer result wins; ties go to the smaller
/// allocation in lexicographic order. Deterministic for fixed options.
pub fn optimize_allocation_relaxed(
    family: &dyn ExponentialFamily,
    tau: &DVector<f64>,
    target: &Target,
    budget: f64,
    n: u64,
    opts: &RelaxationOptions,
) -> Result<OptimizedAllocation> {
    let costs = check_problem(family, budget, n)?;
    let kernel = RiskKernel::new(family, tau, target)?;
    let problem = Relaxed::new(&kernel, &costs, budget, n);
    let results: Vec<Option<(f64, GeneralAllocation)>> = problem
        .starts(opts)
        .into_par_iter()
        .map(|x0| {
            let x = problem.descend(x0, opts.max_iters);
            problem.round_and_repair(&x).map(|(r, xi)| (r, problem.to_alloc(&xi)))
        })
        .collect();
    let best = results
        .into_iter()
        .flatten()
        .reduce(|a, b| {
            let tol = TIE_RTOL * a.0.abs();
            if b.0 < a.0 - tol || (b.0 <= a.0 + tol && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .ok_or_else(|| Error::InfeasibleBudget {
            budget,
            reason: "no feasible allocation".into(),
        })?;
    finish(family, &kernel, best.1)
}
