use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Bernoulli, Distribution, Gamma, Normal};
use statrs::function::gamma::digamma;

use super::ExponentialFamily;
use crate::cost::check_unit_costs;
use crate::error::{Error, Result};

fn check_dim(v: &DVector<f64>, p: usize) -> Result<()> {
    if v.len() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("length {p}"),
            found: v.len().to_string(),
        });
    }
    Ok(())
}

fn checked_costs(costs: Vec<f64>, p: usize) -> Result<Vec<f64>> {
    if costs.len() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("{p} unit costs"),
            found: costs.len().to_string(),
        });
    }
    check_unit_costs(&costs)?;
    Ok(costs)
}

/// Normal family with `t(x) = (x, x²)`, `τ = (μ, μ² + σ²)`.
#[derive(Debug, Clone)]
pub struct NormalFamily {
    costs: Vec<f64>,
}

impl NormalFamily {
    pub fn with_unit_costs(costs: Vec<f64>) -> Result<Self> {
        Ok(Self {
            costs: checked_costs(costs, 2)?,
        })
    }

    /// `(μ, σ²)` from `τ`, rejecting non-positive implied variance.
    pub fn moments(tau: &DVector<f64>) -> Result<(f64, f64)> {
        check_dim(tau, 2)?;
        let mu = tau[0];
        let sigma2 = tau[1] - mu * mu;
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!("implied variance {sigma2} must be > 0")));
        }
        Ok((mu, sigma2))
    }
}

pub fn normal_family() -> NormalFamily {
    NormalFamily { costs: vec![1.0; 2] }
}

impl ExponentialFamily for NormalFamily {
    fn name(&self) -> &'static str {
        "normal"
    }

    fn dim(&self) -> usize {
        2
    }

    fn sufficient_stat(&self, k: usize, x: f64) -> f64 {
        match k {
            0 => x,
            _ => x * x,
        }
    }

    fn tau_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(theta, 2)?;
        if !(theta[1] < 0.0) {
            return Err(Error::Domain(format!("theta_2 = {} must be < 0", theta[1])));
        }
        let sigma2 = -0.5 / theta[1];
        let mu = theta[0] * sigma2;
        Ok(DVector::from_vec(vec![mu, mu * mu + sigma2]))
    }

    fn theta_of_tau(&self, tau: &DVector<f64>) -> Result<DVector<f64>> {
        let (mu, sigma2) = Self::moments(tau)?;
        Ok(DVector::from_vec(vec![mu / sigma2, -0.5 / sigma2]))
    }

    fn fisher_info_inv(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (mu, s2) = Self::moments(tau)?;
        let c = 2.0 * mu * s2;
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[s2, c, c, 4.0 * mu * mu * s2 + 2.0 * s2 * s2],
        ))
    }

    fn unit_costs(&self) -> Vec<f64> {
        self.costs.clone()
    }

    fn sample(&self, tau: &DVector<f64>, rng: &mut dyn RngCore, n: usize) -> Result<Vec<f64>> {
        let (mu, s2) = Self::moments(tau)?;
        let dist = Normal::new(mu, s2.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
        Ok((0..n).map(|_| dist.sample(rng)).collect())
    }
}

/// Bernoulli family with `t(x) = x`, `τ = P(X = 1)`.
#[derive(Debug, Clone)]
pub struct BernoulliFamily {
    costs: Vec<f64>,
}

impl BernoulliFamily {
    pub fn with_unit_costs(costs: Vec<f64>) -> Result<Self> {
        Ok(Self {
            costs: checked_costs(costs, 1)?,
        })
    }

    fn prob(tau: &DVector<f64>) -> Result<f64> {
        check_dim(tau, 1)?;
        let q = tau[0];
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("probability {q} must be in (0, 1)")));
        }
        Ok(q)
    }
}

pub fn bernoulli_family() -> BernoulliFamily {
    BernoulliFamily { costs: vec![1.0] }
}

impl ExponentialFamily for BernoulliFamily {
    fn name(&self) -> &'static str {
        "bernoulli"
    }

    fn dim(&self) -> usize {
        1
    }

    fn sufficient_stat(&self, _k: usize, x: f64) -> f64 {
        x
    }

    fn tau_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(theta, 1)?;
        Ok(DVector::from_element(1, 1.0 / (1.0 + (-theta[0]).exp())))
    }

    fn theta_of_tau(&self, tau: &DVector<f64>) -> Result<DVector<f64>> {
        let q = Self::prob(tau)?;
        Ok(DVector::from_element(1, (q / (1.0 - q)).ln()))
    }

    fn fisher_info_inv(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        let q = Self::prob(tau)?;
        Ok(DMatrix::from_element(1, 1, q * (1.0 - q)))
    }

    fn unit_costs(&self) -> Vec<f64> {
        self.costs.clone()
    }

    fn sample(&self, tau: &DVector<f64>, rng: &mut dyn RngCore, n: usize) -> Result<Vec<f64>> {
        let q = Self::prob(tau)?;
        let dist = Bernoulli::new(q).map_err(|e| Error::Domain(e.to_string()))?;
        Ok((0..n).map(|_| if dist.sample(rng) { 1.0 } else { 0.0 }).collect())
    }
}

/// Gamma family (shape `a`, rate `b`) with `t(x) = (ln x, x)`,
/// `θ = (a - 1, -b)` and `τ = (ψ(a) - ln b, a / b)`.
#[derive(Debug, Clone)]
pub struct GammaFamily {
    costs: Vec<f64>,
}

pub fn gamma_family() -> GammaFamily {
    GammaFamily { costs: vec![1.0; 2] }
}

const GAMMA_MAX_ITERS: usize = 100;

impl GammaFamily {
    pub fn with_unit_costs(costs: Vec<f64>) -> Result<Self> {
        Ok(Self {
            costs: checked_costs(costs, 2)?,
        })
    }

    /// Shape and rate from `τ` by damped Newton on `ln a - ψ(a) = ln τ₂ - τ₁`.
    pub fn shape_rate(tau: &DVector<f64>) -> Result<(f64, f64)> {
        check_dim(tau, 2)?;
        if !(tau[1] > 0.0 && tau[1].is_finite() && tau[0].is_finite()) {
            return Err(Error::Domain(format!("E[X] = {} must be > 0", tau[1])));
        }
        let r = tau[1].ln() - tau[0];
        if !(r > 0.0) {
            return Err(Error::Domain(format!("ln E[X] - E[ln X] = {r} must be > 0")));
        }
        // closed-form starting point, accurate to a few percent
        let mut u = ((3.0 - r + ((r - 3.0).powi(2) + 24.0 * r).sqrt()) / (12.0 * r)).ln();
        for _ in 0..GAMMA_MAX_ITERS {
            let a = u.exp();
            let f = a.ln() - digamma(a) - r;
            let dfdu = 1.0 - a * trigamma(a);
            let step = (f / dfdu).clamp(-1.0, 1.0);
            u -= step;
            if step.abs() <= 1e-14 * u.abs().max(1.0) {
                let a = u.exp();
                return Ok((a, a / tau[1]));
            }
        }
        Err(Error::NoConvergence {
            what: "gamma mean-value inversion",
            iterations: GAMMA_MAX_ITERS,
        })
    }
}

impl ExponentialFamily for GammaFamily {
    fn name(&self) -> &'static str {
        "gamma"
    }

    fn dim(&self) -> usize {
        2
    }

    fn sufficient_stat(&self, k: usize, x: f64) -> f64 {
        match k {
            0 => x.ln(),
            _ => x,
        }
    }

    fn tau_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(theta, 2)?;
        let (a, b) = (theta[0] + 1.0, -theta[1]);
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Domain(format!("shape {a} and rate {b} must be > 0")));
        }
        Ok(DVector::from_vec(vec![digamma(a) - b.ln(), a / b]))
    }

    fn theta_of_tau(&self, tau: &DVector<f64>) -> Result<DVector<f64>> {
        let (a, b) = Self::shape_rate(tau)?;
        Ok(DVector::from_vec(vec![a - 1.0, -b]))
    }

    fn fisher_info_inv(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (a, b) = Self::shape_rate(tau)?;
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[trigamma(a), 1.0 / b, 1.0 / b, a / (b * b)],
        ))
    }

    fn unit_costs(&self) -> Vec<f64> {
        self.costs.clone()
    }

    fn sample(&self, tau: &DVector<f64>, rng: &mut dyn RngCore, n: usize) -> Result<Vec<f64>> {
        let (a, b) = Self::shape_rate(tau)?;
        let dist = Gamma::new(a, 1.0 / b).map_err(|e| Error::Domain(e.to_string()))?;
        Ok((0..n).map(|_| dist.sample(rng)).collect())
    }
}

/// Trigamma function `ψ'(x)` for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // asymptotic series in 1/x
    let tail = x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0 - x2 * 5.0 / 66.0))));
    acc + 1.0 / x + x2 / 2.0 + tail / x
}
