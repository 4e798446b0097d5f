//! Reproducible random streams and Monte Carlo risk estimation.
//!
//! Replicate `r` of a run always draws from the stream derived from
//! `(master_seed, r)`, so results do not depend on scheduling or thread count.
//! Per-replicate outputs are collected in replicate order and reduced
//! sequentially, which makes parallel and serial runs bit-identical.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{CostLedger, MeanCost};
use crate::error::{Error, Result};

/// Counter-based random stream keyed by `(master_seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Stream for replicate `replicate_index` of a run seeded with `master_seed`.
pub fn derive_stream(master_seed: u64, replicate_index: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate_index);
    RngStream {
        master_seed,
        stream_id: replicate_index,
        rng,
    }
}

/// Like [`derive_stream`] but on an independent lane, for runs that need
/// several unrelated streams per replicate (e.g. data vs. algorithm start).
pub fn derive_lane_stream(master_seed: u64, lane: u64, replicate_index: u64) -> RngStream {
    derive_stream(
        splitmix64(master_seed ^ splitmix64(lane.wrapping_add(1))),
        replicate_index,
    )
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_sample<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma2: f64, n: usize) -> Vec<f64> {
    let sd = sigma2.sqrt();
    (0..n).map(|_| mu + sd * standard_normal(rng)).collect()
}

/// Student-t with 3 degrees of freedom as `Z / sqrt(χ²₃ / 3)`.
pub fn student_t3<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let z = standard_normal(rng);
    let chi2: f64 = (0..3).map(|_| standard_normal(rng).powi(2)).sum();
    z / (chi2 / 3.0).sqrt()
}

/// Variance of the contaminated mixture `(1-α) N(0,1) + α · 4 t₃`.
pub fn contaminated_variance(alpha: f64) -> f64 {
    (1.0 - alpha) + alpha * 48.0
}

/// `n` iid draws from `(1-α) N(0,1) + α · 4 t₃`.
pub fn sample_contaminated<R: Rng + ?Sized>(rng: &mut R, n: usize, alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::out_of_range("alpha", alpha, "[0, 1]"));
    }
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() < alpha {
                4.0 * student_t3(rng)
            } else {
                standard_normal(rng)
            }
        })
        .collect())
}

/// Replicate count, seed and execution mode for a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub replicates: usize,
    pub master_seed: u64,
    pub parallel: bool,
}

impl McConfig {
    pub fn new(replicates: usize, master_seed: u64) -> Self {
        Self {
            replicates,
            master_seed,
            parallel: true,
        }
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Evaluate `f` once per replicate on its own stream and return the outputs
/// in replicate order. The first failing replicate (lowest index) is reported.
pub fn replicate_map<T, F>(cfg: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> Result<T> + Sync,
{
    let run = |r: usize| {
        let mut stream = derive_stream(cfg.master_seed, r as u64);
        f(r, &mut stream)
    };
    let outputs: Vec<Result<T>> = if cfg.parallel {
        (0..cfg.replicates).into_par_iter().map(run).collect()
    } else {
        (0..cfg.replicates).map(run).collect()
    };
    outputs
        .into_iter()
        .enumerate()
        .map(|(index, out)| {
            out.map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossKind {
    SquaredErrorScalar,
    SquaredErrorVector,
}

/// Mean loss over replicates with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub mean_loss: f64,
    /// Sample standard deviation of the losses over `sqrt(replicates)`.
    pub std_error: f64,
    pub replicates: usize,
    pub loss_kind: LossKind,
}

impl RiskEstimate {
    pub fn from_losses(losses: &[f64], loss_kind: LossKind) -> Self {
        let (mean, se) = mean_and_se(losses);
        Self {
            mean_loss: mean,
            std_error: se,
            replicates: losses.len(),
            loss_kind,
        }
    }

    /// `(mean_loss - value) / std_error`; infinite when the error is zero
    /// and the values differ.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = self.mean_loss - value;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    /// `|mean_loss - value| <= k · std_error`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean_loss - value).abs() <= k * self.std_error
    }
}

/// Sample mean and standard error (n-1 denominator) of `xs`.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Total risk, per-component risks and average cost of a replicate run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub risk: RiskEstimate,
    pub components: Vec<RiskEstimate>,
    pub mean_cost: MeanCost,
}

/// Squared-error risk of `estimator` at `truth` over `cfg.replicates` draws
/// of `sampler`.
///
/// Each replicate draws its sample from its own stream, then hands the same
/// stream to the estimator for any internal randomness, together with a fresh
/// ledger that is averaged into the report.
pub fn run_replicates<T, S, E>(cfg: &McConfig, truth: &[f64], sampler: S, estimator: E) -> Result<RiskReport>
where
    S: Fn(&mut RngStream) -> Result<T> + Sync,
    E: Fn(&T, &mut RngStream, &mut CostLedger) -> Result<Vec<f64>> + Sync,
{
    run_replicates_weighted(cfg, truth, None, sampler, estimator)
}

/// [`run_replicates`] with a diagonal weight on the squared-error components.
pub fn run_replicates_weighted<T, S, E>(
    cfg: &McConfig,
    truth: &[f64],
    weights: Option<&[f64]>,
    sampler: S,
    estimator: E,
) -> Result<RiskReport>
where
    S: Fn(&mut RngStream) -> Result<T> + Sync,
    E: Fn(&T, &mut RngStream, &mut CostLedger) -> Result<Vec<f64>> + Sync,
{
    if cfg.replicates < 2 {
        return Err(Error::out_of_range("replicates", cfg.replicates, ">= 2"));
    }
    if let Some(w) = weights {
        if w.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} weights", truth.len()),
                found: w.len().to_string(),
            });
        }
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::out_of_range("weights", format!("{w:?}"), "non-negative"));
        }
    }
    let p = truth.len();
    let per_rep = replicate_map(cfg, |_, stream| {
        let sample = sampler(stream)?;
        let mut ledger = CostLedger::new();
        let est = estimator(&sample, stream, &mut ledger)?;
        if est.len() != p {
            return Err(Error::DimensionMismatch {
                expected: format!("estimate of length {p}"),
                found: est.len().to_string(),
            });
        }
        let sq: Vec<f64> = est
            .iter()
            .zip(truth)
            .enumerate()
            .map(|(k, (e, t))| weights.map_or(1.0, |w| w[k]) * (e - t).powi(2))
            .collect();
        Ok((sq, ledger))
    })?;

    let totals: Vec<f64> = per_rep.iter().map(|(sq, _)| sq.iter().sum()).collect();
    let kind = if p == 1 {
        LossKind::SquaredErrorScalar
    } else {
        LossKind::SquaredErrorVector
    };
    let components = (0..p)
        .map(|k| {
            let losses: Vec<f64> = per_rep.iter().map(|(sq, _)| sq[k]).collect();
            RiskEstimate::from_losses(&losses, LossKind::SquaredErrorScalar)
        })
        .collect();
    Ok(RiskReport {
        risk: RiskEstimate::from_losses(&totals, kind),
        components,
        mean_cost: MeanCost::from_ledgers(per_rep.iter().map(|(_, l)| l)),
    })
}
