//! Subset sufficient statistics for exponential families.
//!
//! A family in mean-value form is described by its sufficient statistics
//! `t_k`, the maps between natural (`θ`) and mean-value (`τ`) parameters and
//! the covariance `I⁻¹(τ) = Cov_τ(t(X))`. Each statistic `k` is summed over its
//! own subset `S_k` of the data, described by a [`GeneralAllocation`], and
//! `τ̂_k = T_k / |S_k|`.
//!
//! The estimates have covariance
//! `Σ_kl = |S_k ∩ S_l| · I⁻¹(τ)_kl / (|S_k| |S_l|)`, and the risk of a smooth
//! target `η(τ)` under weights `Q` is `tr(Q η̇ Σ η̇ᵀ)`.

mod families;
mod optimize;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::cost::{CostLedger, GeneralAllocation};
use crate::error::{Error, Result};

pub use families::{
    bernoulli_family, gamma_family, normal_family, trigamma, BernoulliFamily, GammaFamily, NormalFamily,
};
pub use optimize::{
    exhaustive_pair_allocation, optimize_allocation, optimize_allocation_relaxed, OptimizedAllocation,
    RelaxationOptions,
};

/// An exponential family in mean-value parameterization whose data points are
/// real numbers.
pub trait ExponentialFamily: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    /// Number of sufficient statistics `p`.
    fn dim(&self) -> usize;
    /// `t_k(x)` for `k < dim()`.
    fn sufficient_stat(&self, k: usize, x: f64) -> f64;
    fn tau_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
    fn theta_of_tau(&self, tau: &DVector<f64>) -> Result<DVector<f64>>;
    /// `Cov_τ(t(X))`.
    fn fisher_info_inv(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// Cost of folding one data point into each statistic.
    fn unit_costs(&self) -> Vec<f64>;
    fn sample(&self, tau: &DVector<f64>, rng: &mut dyn RngCore, n: usize) -> Result<Vec<f64>>;
}

/// Builtin family by name: `normal`, `bernoulli` or `gamma`.
pub fn family_by_name(name: &str) -> Result<Arc<dyn ExponentialFamily>> {
    match name {
        "normal" => Ok(Arc::new(normal_family())),
        "bernoulli" => Ok(Arc::new(bernoulli_family())),
        "gamma" => Ok(Arc::new(gamma_family())),
        other => Err(Error::out_of_range("family", other, "one of normal, bernoulli, gamma")),
    }
}

pub type EtaFn = Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;

/// A reparameterization `η(τ)` of interest with per-component weights `Q`.
#[derive(Clone)]
pub struct Target {
    name: String,
    eta: EtaFn,
    grad: Option<GradFn>,
    q: Vec<f64>,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Target")
            .field("name", &self.name)
            .field("analytic_gradient", &self.grad.is_some())
            .field("q", &self.q)
            .finish()
    }
}

impl Target {
    /// `η = τ` with unit weights.
    pub fn identity(p: usize) -> Self {
        Self {
            name: "identity".into(),
            eta: Arc::new(|tau| Ok(tau.clone())),
            grad: Some(Arc::new(move |tau| Ok(DMatrix::identity(tau.len(), tau.len())))),
            q: vec![1.0; p],
        }
    }

    /// `η = (τ₁, τ₂ - τ₁²)`, the normal mean and variance.
    pub fn normal_moments() -> Self {
        Self {
            name: "normal-moments".into(),
            eta: Arc::new(|tau| Ok(DVector::from_vec(vec![tau[0], tau[1] - tau[0] * tau[0]]))),
            grad: Some(Arc::new(|tau| {
                Ok(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -2.0 * tau[0], 1.0]))
            })),
            q: vec![1.0; 2],
        }
    }

    /// `η = θ(τ)`, whose Jacobian is `I(τ)`.
    pub fn natural(family: Arc<dyn ExponentialFamily>) -> Self {
        let p = family.dim();
        let fam = family.clone();
        Self {
            name: "natural".into(),
            eta: Arc::new(move |tau| family.theta_of_tau(tau)),
            grad: Some(Arc::new(move |tau| {
                fam.fisher_info_inv(tau)?
                    .try_inverse()
                    .ok_or_else(|| Error::Domain("singular Fisher information".into()))
            })),
            q: vec![1.0; p],
        }
    }

    /// An arbitrary `m`-dimensional target; its gradient is taken by central
    /// differences unless [`Target::with_gradient`] supplies one.
    pub fn custom(
        name: impl Into<String>,
        m: usize,
        eta: impl Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eta: Arc::new(eta),
            grad: None,
            q: vec![1.0; m],
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    /// Replace the weights `Q`; all must be finite and `>= 0`.
    pub fn with_weights(mut self, q: Vec<f64>) -> Result<Self> {
        if q.len() != self.q.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} weights", self.q.len()),
                found: q.len().to_string(),
            });
        }
        if let Some(&bad) = q.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::out_of_range("q", bad, ">= 0"));
        }
        self.q = q;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn weights(&self) -> &[f64] {
        &self.q
    }

    pub fn eta(&self, tau: &DVector<f64>) -> Result<DVector<f64>> {
        (self.eta)(tau)
    }

    /// `η̇(τ)`, an `m × p` matrix.
    pub fn gradient(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.grad {
            Some(g) => g(tau),
            None => self.finite_difference_gradient(tau),
        }
    }

    /// Central differences with step `1e-6 · max(1, |τ_j|)`.
    pub fn finite_difference_gradient(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = tau.len();
        let m = self.q.len();
        let mut g = DMatrix::zeros(m, p);
        for j in 0..p {
            let h = 1e-6 * tau[j].abs().max(1.0);
            let mut up = tau.clone();
            let mut dn = tau.clone();
            up[j] += h;
            dn[j] -= h;
            let diff = (self.eta(&up)? - self.eta(&dn)?) / (2.0 * h);
            if diff.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: format!("eta of length {m}"),
                    found: diff.len().to_string(),
                });
            }
            g.set_column(j, &diff);
        }
        Ok(g)
    }
}

/// Subset totals `T_S` and mean-value estimates `τ̂_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetStatistics {
    pub totals: DVector<f64>,
    pub tau_hat: DVector<f64>,
}

fn check_alloc(family: &dyn ExponentialFamily, alloc: &GeneralAllocation) -> Result<()> {
    if alloc.num_statistics() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} statistics", family.dim()),
            found: alloc.num_statistics().to_string(),
        });
    }
    alloc.check_nonempty()
}

/// Sum each statistic over its subset. Regions are laid out on consecutive
/// blocks of `sample` in ascending mask order. Charges `round(c_k |S_k|)`
/// looks per statistic.
pub fn subset_statistics(
    sample: &[f64],
    alloc: &GeneralAllocation,
    family: &dyn ExponentialFamily,
    ledger: &mut CostLedger,
) -> Result<SubsetStatistics> {
    check_alloc(family, alloc)?;
    alloc.check_within(sample.len() as u64)?;
    let p = family.dim();
    let mut totals = DVector::zeros(p);
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    for (mask, count) in alloc.regions() {
        blocks.push((mask, offset..offset + count as usize));
        offset += count as usize;
    }
    for k in 0..p {
        let mut acc = 0.0;
        for (mask, range) in &blocks {
            if mask & (1 << k) != 0 {
                for &x in &sample[range.clone()] {
                    acc += family.sufficient_stat(k, x);
                }
            }
        }
        totals[k] = acc;
    }
    let sizes = alloc.sizes();
    let costs = family.unit_costs();
    for k in 0..p {
        ledger.charge_looks((costs[k] * sizes[k] as f64).round() as u64);
    }
    let tau_hat = DVector::from_iterator(p, (0..p).map(|k| totals[k] / sizes[k] as f64));
    Ok(SubsetStatistics { totals, tau_hat })
}

/// `θ̂ = τ⁻¹(τ̂)`.
pub fn theta_hat(tau_hat: &DVector<f64>, family: &dyn ExponentialFamily) -> Result<DVector<f64>> {
    family.theta_of_tau(tau_hat)
}

/// Covariance of `τ̂_S`: `|S_k ∩ S_l| · I⁻¹(τ)_kl / (|S_k| |S_l|)`.
pub fn sigma_matrix(
    family: &dyn ExponentialFamily,
    tau: &DVector<f64>,
    alloc: &GeneralAllocation,
) -> Result<DMatrix<f64>> {
    check_alloc(family, alloc)?;
    let info_inv = family.fisher_info_inv(tau)?;
    let p = family.dim();
    let sizes = alloc.sizes();
    Ok(DMatrix::from_fn(p, p, |k, l| {
        alloc.overlap(k, l) as f64 * info_inv[(k, l)] / (sizes[k] as f64 * sizes[l] as f64)
    }))
}

/// `tr(Q η̇ Σ η̇ᵀ)`.
pub fn allocation_risk(
    family: &dyn ExponentialFamily,
    tau: &DVector<f64>,
    alloc: &GeneralAllocation,
    target: &Target,
) -> Result<f64> {
    let sigma = sigma_matrix(family, tau, alloc)?;
    let g = checked_gradient(family, tau, target)?;
    let cov = &g * sigma * g.transpose();
    Ok(target.q.iter().enumerate().map(|(i, w)| w * cov[(i, i)]).sum())
}

fn checked_gradient(family: &dyn ExponentialFamily, tau: &DVector<f64>, target: &Target) -> Result<DMatrix<f64>> {
    if tau.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("tau of length {}", family.dim()),
            found: tau.len().to_string(),
        });
    }
    let g = target.gradient(tau)?;
    if g.ncols() != family.dim() || g.nrows() != target.q.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} x {} gradient", target.q.len(), family.dim()),
            found: format!("{} x {}", g.nrows(), g.ncols()),
        });
    }
    Ok(g)
}

/// Risk as a function of sizes and overlaps only:
/// `Σ_kl A_kl · |S_k ∩ S_l| / (|S_k| |S_l|)` with `A = (η̇ᵀ Q η̇) ∘ I⁻¹(τ)`.
#[derive(Debug, Clone)]
pub(crate) struct RiskKernel {
    pub(crate) a: DMatrix<f64>,
}

impl RiskKernel {
    pub(crate) fn new(family: &dyn ExponentialFamily, tau: &DVector<f64>, target: &Target) -> Result<Self> {
        let g = checked_gradient(family, tau, target)?;
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&target.q));
        let w = g.transpose() * q * g;
        let info_inv = family.fisher_info_inv(tau)?;
        Ok(Self {
            a: w.component_mul(&info_inv),
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Risk from sizes `s` and the symmetric overlap table `o` (`o[k][k] = s[k]`).
    pub(crate) fn risk(&self, sizes: &[f64], overlap: impl Fn(usize, usize) -> f64) -> f64 {
        let p = self.dim();
        let mut r = 0.0;
        for k in 0..p {
            r += self.a[(k, k)] / sizes[k];
            for l in k + 1..p {
                r += 2.0 * self.a[(k, l)] * overlap(k, l) / (sizes[k] * sizes[l]);
            }
        }
        r
    }
}
