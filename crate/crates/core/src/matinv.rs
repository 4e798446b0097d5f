//! Anytime inversion of a Gram matrix and the regression risk along the way.
//!
//! Two iterative inverses are provided: Newton–Schulz (`B ← 2B − BAB`, two
//! matrix products or `2p` vector multiplies per step) and power iteration
//! with deflation (one vector multiply per step) followed by spectral
//! reconstruction. [`matinv_experiment`] traces the least-squares risk of
//! `β̂ = B Xᵀ Y` against cumulative cost for correlated designs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostLedger;
use crate::error::{Error, Result};
use crate::mc::{derive_lane_stream, mean_and_se, replicate_map, standard_normal, McConfig};

/// Eigenvalue estimates at or below this are treated as zero.
pub const EIG_EPS: f64 = 1e-12;
/// Newton–Schulz residual norm treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e10;

/// Correlated design `X = Z D^{1/2} C^{1/2}` with compound-symmetry `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub n_rows: usize,
    pub p: usize,
    pub rho: f64,
    pub d_diag: Vec<f64>,
}

impl DesignConfig {
    /// `d_diag` decreasing uniformly from 4 to 2.
    pub fn new(n_rows: usize, p: usize, rho: f64) -> Self {
        let d_diag = (0..p)
            .map(|j| {
                if p == 1 {
                    4.0
                } else {
                    4.0 - 2.0 * j as f64 / (p - 1) as f64
                }
            })
            .collect();
        Self { n_rows, p, rho, d_diag }
    }

    pub fn validate(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        if !(0.0..1.0).contains(&self.rho) {
            errs.push(Error::out_of_range("rho", self.rho, "rho must be in [0,1)"));
        }
        if self.p == 0 {
            errs.push(Error::out_of_range("p", self.p, ">= 1"));
        }
        if self.n_rows <= self.p {
            errs.push(Error::out_of_range("n_rows", self.n_rows, format!("> p = {}", self.p)));
        }
        if self.d_diag.len() != self.p {
            errs.push(Error::DimensionMismatch {
                expected: format!("{} diagonal entries", self.p),
                found: self.d_diag.len().to_string(),
            });
        }
        if self.d_diag.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            errs.push(Error::out_of_range(
                "d_diag",
                format!("{:?}", self.d_diag),
                "every entry > 0",
            ));
        }
        errs
    }

    fn check(&self) -> Result<()> {
        match self.validate().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `C = (1-ρ) I + ρ 11ᵀ`.
    pub fn correlation(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| if i == j { 1.0 } else { self.rho })
    }

    /// Symmetric square root of `C` from its two eigenvalues `1-ρ` and
    /// `1+(p-1)ρ`.
    pub fn correlation_sqrt(&self) -> DMatrix<f64> {
        let p = self.p as f64;
        let a = (1.0 - self.rho).sqrt();
        let b = (1.0 + (p - 1.0) * self.rho).sqrt();
        let off = (b - a) / p;
        DMatrix::from_fn(self.p, self.p, |i, j| if i == j { a + off } else { off })
    }
}

/// A design matrix and its Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

/// Draw `X` and `S = XᵀX`; `S` is made exactly symmetric.
pub fn generate_design<R: Rng + ?Sized>(cfg: &DesignConfig, rng: &mut R) -> Result<Design> {
    cfg.check()?;
    let z = DMatrix::from_fn(cfg.n_rows, cfg.p, |_, _| standard_normal(rng));
    let d_half = DMatrix::from_diagonal(&DVector::from_iterator(cfg.p, cfg.d_diag.iter().map(|d| d.sqrt())));
    let x = z * d_half * cfg.correlation_sqrt();
    let mut gram = x.tr_mul(&x);
    for i in 0..cfg.p {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    Ok(Design { x, gram })
}

fn check_square(name: &str, a: &DMatrix<f64>, p: usize) -> Result<()> {
    if a.nrows() != p || a.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("{name} of size {p} x {p}"),
            found: format!("{} x {}", a.nrows(), a.ncols()),
        });
    }
    Ok(())
}

/// `2B − BAB`.
pub fn newton_schulz_step(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square("A", a, a.nrows())?;
    check_square("B", b, a.nrows())?;
    Ok(b * 2.0 - b * a * b)
}

/// `‖I − BA‖_F`.
pub fn inverse_residual(b: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    (DMatrix::identity(a.nrows(), a.ncols()) - b * a).norm()
}

/// Newton–Schulz starting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// `Aᵀ / (‖A‖₁ ‖A‖∞)`, which guarantees convergence.
    Safe,
    /// `I / tr(A)`.
    Naive,
}

pub fn newton_schulz_init(a: &DMatrix<f64>, mode: InitMode) -> DMatrix<f64> {
    let p = a.nrows();
    match mode {
        InitMode::Safe => {
            let norm1 = (0..p).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
            let norm_inf = (0..p).map(|i| a.row(i).abs().sum()).fold(0.0, f64::max);
            a.transpose() / (norm1 * norm_inf)
        }
        InitMode::Naive => DMatrix::identity(p, p) / a.trace(),
    }
}

/// Iterates `B_0, …, B_k` for `k = max_iters`; each step charges `2p` vector
/// multiplies.
pub fn newton_schulz(
    a: &DMatrix<f64>,
    init: InitMode,
    max_iters: usize,
    ledger: &mut CostLedger,
) -> Result<Vec<DMatrix<f64>>> {
    let p = a.nrows();
    check_square("A", a, p)?;
    let mut iterates = Vec::with_capacity(max_iters + 1);
    iterates.push(newton_schulz_init(a, init));
    for step in 1..=max_iters {
        let next = newton_schulz_step(iterates.last().expect("non-empty"), a)?;
        ledger.charge_vector_multiplies(2 * p as u64);
        let residual = inverse_residual(&next, a);
        if !(residual <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step, residual });
        }
        iterates.push(next);
    }
    Ok(iterates)
}

/// `k` normalized multiplications `v ← Av / ‖Av‖`, one vector multiply each.
pub fn power_iteration(a: &DMatrix<f64>, v0: &DVector<f64>, k: usize, ledger: &mut CostLedger) -> Result<DVector<f64>> {
    check_square("A", a, v0.len())?;
    let norm = v0.norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroVector);
    }
    let mut v = v0 / norm;
    for _ in 0..k {
        let w = a * &v;
        ledger.charge_vector_multiplies(1);
        let wn = w.norm();
        if !(wn > 0.0) {
            return Err(Error::ZeroVector);
        }
        v = w / wn;
    }
    Ok(v)
}

/// Power-iteration counts per eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "k")]
pub enum Schedule {
    Constant(usize),
    /// `k, k-1, …`, never below 1.
    Decreasing(usize),
}

impl Schedule {
    pub fn per_vector_iters(&self, p: usize) -> Vec<usize> {
        match *self {
            Schedule::Constant(k) => vec![k; p],
            Schedule::Decreasing(k) => (0..p).map(|i| k.saturating_sub(i).max(1)).collect(),
        }
    }

    pub fn total_cost(&self, p: usize) -> u64 {
        self.per_vector_iters(p).iter().map(|&k| k as u64).sum()
    }

    pub fn label(&self) -> String {
        match self {
            Schedule::Constant(k) => format!("power-constant-{k}"),
            Schedule::Decreasing(k) => format!("power-decreasing-{k}"),
        }
    }
}

/// `C(k+p, 2) − C(k, 2)`, the sum `k + (k+1) + … + (k+p−1)`. Reference only;
/// ledgers charge the actual iteration counts.
pub fn binomial_reference_cost(k: u64, p: u64) -> u64 {
    let c2 = |m: u64| m * m.saturating_sub(1) / 2;
    c2(k + p) - c2(k)
}

/// How the matrix is updated after each eigenvector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Deflation {
    /// `A − λ̂ v vᵀ`.
    #[default]
    Hotelling,
    /// `A − v vᵀ`.
    UnitShift,
}

/// Estimated eigenpairs, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    /// Iterations spent on each retained vector.
    pub iterations: Vec<usize>,
    /// Stopped early on a non-positive eigenvalue estimate.
    pub truncated: bool,
}

/// Power iteration with deflation from random starting vectors.
pub fn deflated_eigs<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    schedule: Schedule,
    deflation: Deflation,
    rng: &mut R,
    ledger: &mut CostLedger,
) -> Result<Eigenpairs> {
    let p = a.nrows();
    check_square("A", a, p)?;
    let mut cur = a.clone();
    let mut out = Eigenpairs {
        values: Vec::with_capacity(p),
        vectors: Vec::with_capacity(p),
        iterations: Vec::with_capacity(p),
        truncated: false,
    };
    for k in schedule.per_vector_iters(p) {
        let v0 = DVector::from_fn(p, |_, _| standard_normal(rng));
        let v = match power_iteration(&cur, &v0, k, ledger) {
            Ok(v) => v,
            Err(Error::ZeroVector) => {
                out.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let lambda = v.dot(&(&cur * &v));
        if lambda <= EIG_EPS {
            out.truncated = true;
            break;
        }
        let scale = match deflation {
            Deflation::Hotelling => lambda,
            Deflation::UnitShift => 1.0,
        };
        cur -= (&v * v.transpose()) * scale;
        out.values.push(lambda);
        out.vectors.push(v);
        out.iterations.push(k);
    }
    Ok(out)
}

/// `Σ v vᵀ / λ` over the first `count` pairs; exactly symmetric.
pub fn inverse_from_eigs(eigs: &Eigenpairs, count: usize) -> Result<DMatrix<f64>> {
    let count = count.min(eigs.values.len());
    let Some(first) = eigs.vectors.first() else {
        return Err(Error::NoEigenpairs);
    };
    if count == 0 {
        return Err(Error::NoEigenpairs);
    }
    let p = first.len();
    let mut b = DMatrix::zeros(p, p);
    for (lambda, v) in eigs.values.iter().zip(&eigs.vectors).take(count) {
        for i in 0..p {
            for j in i..p {
                let t = v[i] * v[j] / lambda;
                b[(i, j)] += t;
                if i != j {
                    b[(j, i)] += t;
                }
            }
        }
    }
    Ok(b)
}

/// Risk of `β̂ = B Xᵀ Y` given `X`: `‖(BS − I)β‖² + σ² tr(B S Bᵀ)`.
pub fn regression_risk(b: &DMatrix<f64>, s: &DMatrix<f64>, beta: &DVector<f64>, sigma2: f64) -> Result<f64> {
    let p = beta.len();
    check_square("B", b, p)?;
    check_square("S", s, p)?;
    let bs = b * s;
    let bias = (&bs - DMatrix::identity(p, p)) * beta;
    Ok(bias.norm_squared() + sigma2 * (bs * b.transpose()).trace())
}

/// `σ² tr(S⁻¹)`, the risk of the exact inverse.
pub fn exact_floor(s: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    let inv = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("Gram matrix is not positive definite".into()))?
        .inverse();
    Ok(sigma2 * inv.trace())
}

/// `p` equally spaced values from −1 to 1.
pub fn default_beta(p: usize) -> DVector<f64> {
    DVector::from_fn(p, |i, _| {
        if p == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (p - 1) as f64
        }
    })
}

/// An inversion method traced by [`matinv_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Method {
    NewtonSchulz { init: InitMode, iters: usize },
    Power { schedule: Schedule },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::NewtonSchulz {
                init: InitMode::Safe, ..
            } => "ns-safe".into(),
            Method::NewtonSchulz {
                init: InitMode::Naive, ..
            } => "ns-naive".into(),
            Method::Power { schedule } => schedule.label(),
        }
    }
}

/// Settings for [`matinv_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatInvExperiment {
    pub rhos: Vec<f64>,
    pub methods: Vec<Method>,
    pub n_rows: usize,
    pub p: usize,
    pub datasets: usize,
    pub sigma2: f64,
    pub deflation: Deflation,
    pub master_seed: u64,
    pub parallel: bool,
}

impl MatInvExperiment {
    pub fn validate(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        if self.rhos.is_empty() {
            errs.push(Error::out_of_range("rhos", "[]", "at least one rho"));
        }
        for &rho in &self.rhos {
            errs.extend(DesignConfig::new(self.n_rows, self.p, rho).validate());
        }
        if self.methods.is_empty() {
            errs.push(Error::out_of_range("methods", "[]", "at least one method"));
        }
        if self.datasets < 2 {
            errs.push(Error::out_of_range("datasets", self.datasets, ">= 2"));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            errs.push(Error::out_of_range("sigma2", self.sigma2, ">= 0"));
        }
        errs
    }
}

/// One checkpoint of one averaged trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub rho: f64,
    pub method: String,
    pub checkpoint: usize,
    /// Mean cumulative vector multiplies.
    pub cost: f64,
    pub risk: f64,
    pub risk_se: f64,
    /// Mean `‖BS − I‖_F`.
    pub residual: f64,
    /// Mean exact-inverse risk.
    pub floor_risk: f64,
}

struct Checkpoint {
    cost: u64,
    risk: f64,
    residual: f64,
}

fn trace_method<R: Rng + ?Sized>(
    method: &Method,
    s: &DMatrix<f64>,
    beta: &DVector<f64>,
    sigma2: f64,
    deflation: Deflation,
    rng: &mut R,
) -> Result<Vec<Checkpoint>> {
    let p = beta.len();
    let point = |b: &DMatrix<f64>, cost: u64| -> Result<Checkpoint> {
        Ok(Checkpoint {
            cost,
            risk: regression_risk(b, s, beta, sigma2)?,
            residual: (b * s - DMatrix::identity(p, p)).norm(),
        })
    };
    match *method {
        Method::NewtonSchulz { init, iters } => {
            let mut ledger = CostLedger::new();
            let its = newton_schulz(s, init, iters, &mut ledger)?;
            its.iter()
                .enumerate()
                .map(|(i, b)| point(b, (2 * p * i) as u64))
                .collect()
        }
        Method::Power { schedule } => {
            let mut ledger = CostLedger::new();
            let eigs = deflated_eigs(s, schedule, deflation, rng, &mut ledger)?;
            let mut out = vec![point(&DMatrix::zeros(p, p), 0)?];
            let mut cost = 0u64;
            for i in 1..=eigs.values.len() {
                cost += eigs.iterations[i - 1] as u64;
                out.push(point(&inverse_from_eigs(&eigs, i)?, cost)?);
            }
            Ok(out)
        }
    }
}

const METHOD_LANE_BASE: u64 = 1 << 32;

/// Average risk trajectories over independent designs. Newton–Schulz records
/// every iterate; power methods record after each completed eigenvector,
/// both starting from a checkpoint 0.
pub fn matinv_experiment(cfg: &MatInvExperiment) -> Result<Vec<TrajectoryRow>> {
    if let Some(e) = cfg.validate().into_iter().next() {
        return Err(e);
    }
    let beta = default_beta(cfg.p);
    let mc = McConfig {
        replicates: cfg.datasets,
        master_seed: cfg.master_seed,
        parallel: cfg.parallel,
    };
    let mut rows = Vec::new();
    for (ri, &rho) in cfg.rhos.iter().enumerate() {
        let design_cfg = DesignConfig::new(cfg.n_rows, cfg.p, rho);
        let per_dataset: Vec<(f64, Vec<Vec<Checkpoint>>)> = replicate_map(&mc, |d, _| {
            let mut rng = derive_lane_stream(cfg.master_seed, ri as u64, d as u64);
            let design = generate_design(&design_cfg, &mut rng)?;
            let floor = exact_floor(&design.gram, cfg.sigma2)?;
            let traces = cfg
                .methods
                .iter()
                .enumerate()
                .map(|(mi, m)| {
                    let lane = METHOD_LANE_BASE + (ri * cfg.methods.len() + mi) as u64;
                    let mut mrng = derive_lane_stream(cfg.master_seed, lane, d as u64);
                    trace_method(m, &design.gram, &beta, cfg.sigma2, cfg.deflation, &mut mrng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((floor, traces))
        })?;
        let floor_risk = per_dataset.iter().map(|(f, _)| f).sum::<f64>() / cfg.datasets as f64;
        for (mi, m) in cfg.methods.iter().enumerate() {
            let len = per_dataset.iter().map(|(_, t)| t[mi].len()).min().unwrap_or(0);
            for c in 0..len {
                let risks: Vec<f64> = per_dataset.iter().map(|(_, t)| t[mi][c].risk).collect();
                let (risk, risk_se) = mean_and_se(&risks);
                let mean = |f: &dyn Fn(&Checkpoint) -> f64| {
                    per_dataset.iter().map(|(_, t)| f(&t[mi][c])).sum::<f64>() / cfg.datasets as f64
                };
                rows.push(TrajectoryRow {
                    rho,
                    method: m.label(),
                    checkpoint: c,
                    cost: mean(&|k| k.cost as f64),
                    risk,
                    risk_se,
                    residual: mean(&|k| k.residual),
                    floor_risk,
                });
            }
        }
    }
    Ok(rows)
}
