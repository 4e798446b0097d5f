//! Runs a resolved configuration and collects its rows.

use crate::error::{Error, Result};
use crate::expfam::{optimize_allocation, optimize_allocation_relaxed, RelaxationOptions};
use crate::matinv::matinv_experiment;
use crate::mc::{normal_sample, run_replicates, McConfig};
use crate::normal::{
    frontier_with, mixed_asymptotic_cov, optimal_allocation_relaxed, streaming_estimate, streaming_risks,
};
use crate::robust::hl_experiment;

use super::config::{ExperimentConfig, ExpfamPlan, NormalMode, NormalPlan, Plan, Solver};
use super::table::{Cell, Column, ColumnKind, Metadata, ResultTable};

/// Validate, run and tabulate. Validation failures come back as a single
/// [`Error::Config`] listing every problem.
pub fn run(config: &ExperimentConfig) -> Result<ResultTable> {
    let plan = config.resolve().map_err(|errs| {
        let list: Vec<String> = errs.iter().map(ToString::to_string).collect();
        Error::Config(list.join("; "))
    })?;
    run_plan(config, &plan)
}

pub fn run_plan(config: &ExperimentConfig, plan: &Plan) -> Result<ResultTable> {
    let metadata = Metadata {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: config.experiment.as_str().into(),
        master_seed: config.master_seed,
        replicates: config.replicates,
        parameters: plan.parameters(),
    };
    match plan {
        Plan::Normal(p) if p.params.mode == NormalMode::Streaming => normal_streaming(p, metadata),
        Plan::Normal(p) => normal_frontier(p, metadata),
        Plan::Expfam(p) => expfam_frontier(p, metadata),
        Plan::Hl(p) => {
            let mut t = ResultTable::new(
                columns(&[
                    ("variant", ColumnKind::Text),
                    ("alpha", ColumnKind::Float),
                    ("budget", ColumnKind::Int),
                    ("mean_cost", ColumnKind::Float),
                    ("risk", ColumnKind::Float),
                    ("risk_se", ColumnKind::Float),
                    ("replicates", ColumnKind::Int),
                ]),
                metadata,
            );
            for r in hl_experiment(&p.experiment)? {
                t.push(vec![
                    r.variant.as_str().into(),
                    r.alpha.into(),
                    r.budget.into(),
                    r.mean_cost.into(),
                    r.risk.into(),
                    r.risk_se.into(),
                    r.replicates.into(),
                ])?;
            }
            Ok(t)
        }
        Plan::Matinv(p) => {
            let mut t = ResultTable::new(
                columns(&[
                    ("rho", ColumnKind::Float),
                    ("method", ColumnKind::Text),
                    ("checkpoint", ColumnKind::Int),
                    ("cost", ColumnKind::Float),
                    ("risk", ColumnKind::Float),
                    ("risk_se", ColumnKind::Float),
                    ("residual", ColumnKind::Float),
                    ("floor_risk", ColumnKind::Float),
                ]),
                metadata,
            );
            for r in matinv_experiment(&p.experiment)? {
                t.push(vec![
                    r.rho.into(),
                    r.method.into(),
                    r.checkpoint.into(),
                    r.cost.into(),
                    r.risk.into(),
                    r.risk_se.into(),
                    r.residual.into(),
                    r.floor_risk.into(),
                ])?;
            }
            Ok(t)
        }
    }
}

fn columns(spec: &[(&str, ColumnKind)]) -> Vec<Column> {
    spec.iter().map(|&(name, kind)| Column::new(name, kind)).collect()
}

fn normal_frontier(p: &NormalPlan, metadata: Metadata) -> Result<ResultTable> {
    let mut t = ResultTable::new(
        columns(&[
            ("budget", ColumnKind::Int),
            ("n1", ColumnKind::Int),
            ("n2", ColumnKind::Int),
            ("n12", ColumnKind::Int),
            ("risk", ColumnKind::Float),
            ("risk_mu", ColumnKind::Float),
            ("risk_sigma2", ColumnKind::Float),
        ]),
        metadata,
    );
    let n = p.params.n;
    let points: Vec<(u64, crate::Allocation, f64, f64)> = match p.params.solver {
        Solver::Exact => frontier_with(&p.normal, n, &p.budgets, p.params.tie_break)?
            .points
            .into_iter()
            .map(|pt| (pt.budget, pt.alloc, pt.risk_mu, pt.risk_sigma2))
            .collect(),
        Solver::Relaxed => p
            .budgets
            .iter()
            .map(|&b| {
                let alloc = optimal_allocation_relaxed(&p.normal, n, b)?;
                let cov = mixed_asymptotic_cov(&p.normal, &alloc)?;
                Ok((b, alloc, cov[(0, 0)], cov[(1, 1)]))
            })
            .collect::<Result<_>>()?,
    };
    for (budget, a, risk_mu, risk_sigma2) in points {
        t.push(vec![
            budget.into(),
            a.n1.into(),
            a.n2.into(),
            a.n12.into(),
            (risk_mu + risk_sigma2).into(),
            risk_mu.into(),
            risk_sigma2.into(),
        ])?;
    }
    Ok(t)
}

fn normal_streaming(p: &NormalPlan, metadata: Metadata) -> Result<ResultTable> {
    let mut t = ResultTable::new(
        columns(&[
            ("quantity", ColumnKind::Text),
            ("n", ColumnKind::Int),
            ("s", ColumnKind::Int),
            ("closed_form", ColumnKind::Float),
            ("mc_risk", ColumnKind::Float),
            ("mc_se", ColumnKind::Float),
            ("z", ColumnKind::Float),
            ("replicates", ColumnKind::Int),
        ]),
        metadata,
    );
    let (n, s) = (p.params.n, p.s);
    let (mu, sigma2) = (p.normal.mu, p.normal.sigma2);
    let (risk_mu, risk_sigma2) = streaming_risks(&p.normal, n, s)?;
    let cfg = McConfig {
        replicates: p.replicates,
        master_seed: p.master_seed,
        parallel: p.parallel,
    };
    let report = run_replicates(
        &cfg,
        &[mu, sigma2],
        |rng| Ok(normal_sample(rng, mu, sigma2, n)),
        |x, _, ledger| Ok(streaming_estimate(x, s, ledger)?.to_vec()),
    )?;
    for (name, exact, est) in [
        ("mu", risk_mu, &report.components[0]),
        ("sigma2", risk_sigma2, &report.components[1]),
    ] {
        t.push(vec![
            name.into(),
            n.into(),
            s.into(),
            exact.into(),
            est.mean_loss.into(),
            est.std_error.into(),
            est.z_score(exact).into(),
            est.replicates.into(),
        ])?;
    }
    Ok(t)
}

fn expfam_frontier(p: &ExpfamPlan, metadata: Metadata) -> Result<ResultTable> {
    let dim = p.family.dim();
    let mut spec: Vec<(String, ColumnKind)> = vec![
        ("budget".into(), ColumnKind::Float),
        ("cost".into(), ColumnKind::Float),
        ("risk".into(), ColumnKind::Float),
    ];
    spec.extend((1..=dim).map(|k| (format!("size_{k}"), ColumnKind::Int)));
    for k in 1..=dim {
        for l in k + 1..=dim {
            spec.push((format!("overlap_{k}_{l}"), ColumnKind::Int));
        }
    }
    let mut t = ResultTable::new(spec.into_iter().map(|(n, k)| Column::new(n, k)).collect(), metadata);
    let opts = RelaxationOptions {
        starts: p.params.starts,
        seed: p.master_seed,
        ..RelaxationOptions::default()
    };
    let n = p.params.n;
    for &budget in &p.budgets {
        let best = if dim <= 2 {
            optimize_allocation(p.family.as_ref(), &p.tau, &p.target, budget, n)?
        } else {
            optimize_allocation_relaxed(p.family.as_ref(), &p.tau, &p.target, budget, n, &opts)?
        };
        let mut row: Vec<Cell> = vec![budget.into(), best.cost.into(), best.risk.into()];
        row.extend(best.alloc.sizes().into_iter().map(Cell::from));
        row.extend(
            best.alloc
                .overlaps()
                .into_iter()
                .filter(|&(k, l, _)| k < l)
                .map(|(_, _, o)| Cell::from(o)),
        );
        t.push(row)?;
    }
    Ok(t)
}
