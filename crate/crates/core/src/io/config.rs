//! Experiment configuration: a TOML file, optionally overridden by flags,
//! resolved into the typed settings each experiment runs on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{
    bernoulli_family, gamma_family, normal_family, BernoulliFamily, ExponentialFamily, GammaFamily, NormalFamily,
    Target,
};
use crate::matinv::{Deflation, InitMode, MatInvExperiment, Method, Schedule};
use crate::normal::{NormalParams, TieBreak};
use crate::robust::{HlExperiment, HlVariant};

/// Largest number of budgets a range may expand to.
pub const MAX_BUDGETS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NormalFrontier,
    ExpfamFrontier,
    Hl,
    Matinv,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::NormalFrontier => "normal-frontier",
            ExperimentKind::ExpfamFrontier => "expfam-frontier",
            ExperimentKind::Hl => "hl",
            ExperimentKind::Matinv => "matinv",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_replicates() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

/// A complete run request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            parameters: BTreeMap::new(),
            master_seed: 0,
            replicates: default_replicates(),
            output_path: None,
            format: OutputFormat::Csv,
            parallel: true,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn set_parameter(&mut self, key: impl Into<String>, value: serde_json::Value) {
        self.parameters.insert(key.into(), value);
    }

    /// Set a parameter from `key=value` text; the value is read as a TOML
    /// value (`3`, `0.5`, `[1, 2]`, `"gamma"`) and falls back to a bare string.
    pub fn set_parameter_str(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("empty key in `{assignment}`")));
        }
        let value = parse_toml_value(raw.trim());
        self.set_parameter(key, value);
        Ok(())
    }

    /// Every problem with the configuration; empty when it can run.
    pub fn validate(&self) -> Vec<Error> {
        match self.resolve() {
            Ok(_) => Vec::new(),
            Err(errs) => errs,
        }
    }

    /// Typed settings for the selected experiment, or every problem found.
    pub fn resolve(&self) -> std::result::Result<Plan, Vec<Error>> {
        match self.experiment {
            ExperimentKind::NormalFrontier => {
                let p: NormalFrontierParams = parse_params(&self.parameters).map_err(|e| vec![e])?;
                p.resolve(self).map(Plan::Normal)
            }
            ExperimentKind::ExpfamFrontier => {
                let p: ExpfamFrontierParams = parse_params(&self.parameters).map_err(|e| vec![e])?;
                p.resolve(self).map(Plan::Expfam)
            }
            ExperimentKind::Hl => {
                let p: HlParams = parse_params(&self.parameters).map_err(|e| vec![e])?;
                p.resolve(self).map(Plan::Hl)
            }
            ExperimentKind::Matinv => {
                let p: MatInvParams = parse_params(&self.parameters).map_err(|e| vec![e])?;
                p.resolve(self).map(Plan::Matinv)
            }
        }
    }
}

fn parse_toml_value(raw: &str) -> serde_json::Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: toml::Value,
    }
    match toml::from_str::<Wrapper>(&format!("v = {raw}")) {
        Ok(w) => serde_json::to_value(w.v).unwrap_or_else(|_| serde_json::Value::String(raw.to_string())),
        Err(_) => serde_json::Value::String(raw.to_string()),
    }
}

fn parse_params<T: DeserializeOwned>(params: &BTreeMap<String, serde_json::Value>) -> Result<T> {
    let obj: serde_json::Map<String, serde_json::Value> = params.clone().into_iter().collect();
    serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| Error::Config(format!("parameters: {e}")))
}

fn check_replicates(cfg: &ExperimentConfig, errs: &mut Vec<Error>) {
    if cfg.replicates < 2 {
        errs.push(Error::out_of_range("replicates", cfg.replicates, ">= 2"));
    }
}

fn integer_budgets(
    list: &Option<Vec<u64>>,
    min: Option<u64>,
    max: Option<u64>,
    step: u64,
    default_min: u64,
    default_max: u64,
    errs: &mut Vec<Error>,
) -> Vec<u64> {
    if let Some(list) = list {
        if min.is_some() || max.is_some() {
            errs.push(Error::Config(
                "give either budgets or budget_min/budget_max, not both".into(),
            ));
        }
        if list.is_empty() {
            errs.push(Error::out_of_range("budgets", "[]", "at least one budget"));
        }
        if list.windows(2).any(|w| w[0] >= w[1]) {
            errs.push(Error::out_of_range(
                "budgets",
                format!("{list:?}"),
                "strictly increasing",
            ));
        }
        return list.clone();
    }
    let lo = min.unwrap_or(default_min);
    let hi = max.unwrap_or(default_max);
    if step == 0 {
        errs.push(Error::out_of_range("budget_step", step, ">= 1"));
        return Vec::new();
    }
    if lo > hi {
        errs.push(Error::out_of_range("budget_min", lo, format!("<= budget_max = {hi}")));
        return Vec::new();
    }
    if (hi - lo) / step >= MAX_BUDGETS as u64 {
        errs.push(Error::out_of_range(
            "budget_step",
            step,
            format!("at most {MAX_BUDGETS} budgets"),
        ));
        return Vec::new();
    }
    (lo..=hi).step_by(step as usize).collect()
}

/// Typed settings ready to run.
#[derive(Debug, Clone)]
pub enum Plan {
    Normal(NormalPlan),
    Expfam(ExpfamPlan),
    Hl(HlPlan),
    Matinv(MatInvPlan),
}

impl Plan {
    /// Fully defaulted parameters, recorded next to the results.
    pub fn parameters(&self) -> serde_json::Value {
        let v = match self {
            Plan::Normal(p) => serde_json::to_value(&p.params),
            Plan::Expfam(p) => serde_json::to_value(&p.params),
            Plan::Hl(p) => serde_json::to_value(&p.params),
            Plan::Matinv(p) => serde_json::to_value(&p.params),
        };
        v.expect("parameters serialize")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalMode {
    /// Optimal allocation and risk at every budget.
    #[default]
    Frontier,
    /// Monte Carlo check of the split-sample estimators at one split.
    Streaming,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Exact,
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFrontierParams {
    pub mode: NormalMode,
    pub mu: f64,
    pub sigma2: f64,
    pub n: usize,
    pub budgets: Option<Vec<u64>>,
    pub budget_min: Option<u64>,
    pub budget_max: Option<u64>,
    pub budget_step: u64,
    pub tie_break: TieBreak,
    pub solver: Solver,
    /// Split point for streaming mode; defaults to `n / 2`.
    pub s: Option<usize>,
}

impl Default for NormalFrontierParams {
    fn default() -> Self {
        Self {
            mode: NormalMode::Frontier,
            mu: 0.0,
            sigma2: 1.0,
            n: 100,
            budgets: None,
            budget_min: None,
            budget_max: None,
            budget_step: 1,
            tie_break: TieBreak::MaxOverlap,
            solver: Solver::Exact,
            s: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormalPlan {
    pub params: NormalFrontierParams,
    pub normal: NormalParams,
    pub budgets: Vec<u64>,
    pub s: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub parallel: bool,
}

impl NormalFrontierParams {
    fn resolve(self, cfg: &ExperimentConfig) -> std::result::Result<NormalPlan, Vec<Error>> {
        let mut errs = Vec::new();
        let normal = NormalParams::new(self.mu, self.sigma2).map_err(|e| errs.push(e)).ok();
        if self.n < 1 {
            errs.push(Error::out_of_range("n", self.n, ">= 1"));
        }
        let s = self.s.unwrap_or(self.n / 2);
        if (self.s.is_some() || self.mode == NormalMode::Streaming) && (self.n < 3 || s < 2 || s > self.n - 1) {
            errs.push(Error::out_of_range(
                "s",
                s,
                format!("s must be in [2, n-1] with n = {}", self.n),
            ));
        }
        let mut budgets = Vec::new();
        match self.mode {
            NormalMode::Frontier => {
                let max_budget = 2 * self.n as u64;
                budgets = integer_budgets(
                    &self.budgets,
                    self.budget_min,
                    self.budget_max,
                    self.budget_step,
                    2,
                    max_budget,
                    &mut errs,
                );
                for &c in &budgets {
                    if c < 2 || c > max_budget {
                        errs.push(Error::out_of_range("budget", c, format!("[2, 2n] = [2, {max_budget}]")));
                    }
                }
            }
            NormalMode::Streaming => check_replicates(cfg, &mut errs),
        }
        match normal {
            Some(normal) if errs.is_empty() => Ok(NormalPlan {
                params: Self { s: Some(s), ..self },
                normal,
                budgets,
                s,
                replicates: cfg.replicates,
                master_seed: cfg.master_seed,
                parallel: cfg.parallel,
            }),
            _ => Err(errs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpfamFrontierParams {
    /// `normal`, `bernoulli` or `gamma`.
    pub family: String,
    /// Mean-value parameter; mutually exclusive with `theta`.
    pub tau: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    /// `identity`, `natural` or `normal-moments`.
    pub target: String,
    pub q: Option<Vec<f64>>,
    pub unit_costs: Option<Vec<f64>>,
    pub n: u64,
    pub budgets: Option<Vec<f64>>,
    pub budget_min: Option<f64>,
    pub budget_max: Option<f64>,
    pub budget_step: f64,
    /// Starts for the relaxed optimizer (three or more statistics).
    pub starts: usize,
}

impl Default for ExpfamFrontierParams {
    fn default() -> Self {
        Self {
            family: "normal".into(),
            tau: None,
            theta: None,
            target: "identity".into(),
            q: None,
            unit_costs: None,
            n: 100,
            budgets: None,
            budget_min: None,
            budget_max: None,
            budget_step: 1.0,
            starts: 8,
        }
    }
}

#[derive(Clone)]
pub struct ExpfamPlan {
    pub params: ExpfamFrontierParams,
    pub family: Arc<dyn ExponentialFamily>,
    pub tau: DVector<f64>,
    pub target: Target,
    pub budgets: Vec<f64>,
    pub master_seed: u64,
}

impl std::fmt::Debug for ExpfamPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExpfamPlan")
            .field("params", &self.params)
            .field("tau", &self.tau.as_slice())
            .field("budgets", &self.budgets.len())
            .finish()
    }
}

fn build_family(name: &str, costs: Option<Vec<f64>>) -> Result<Arc<dyn ExponentialFamily>> {
    Ok(match (name, costs) {
        ("normal", None) => Arc::new(normal_family()),
        ("normal", Some(c)) => Arc::new(NormalFamily::with_unit_costs(c)?),
        ("bernoulli", None) => Arc::new(bernoulli_family()),
        ("bernoulli", Some(c)) => Arc::new(BernoulliFamily::with_unit_costs(c)?),
        ("gamma", None) => Arc::new(gamma_family()),
        ("gamma", Some(c)) => Arc::new(GammaFamily::with_unit_costs(c)?),
        (other, _) => return Err(Error::out_of_range("family", other, "one of normal, bernoulli, gamma")),
    })
}

/// Default `τ`: standard normal, Bernoulli(0.3), Gamma(shape 2, rate 1).
fn default_tau(family: &dyn ExponentialFamily) -> Result<DVector<f64>> {
    match family.name() {
        "normal" => Ok(DVector::from_vec(vec![0.0, 1.0])),
        "bernoulli" => Ok(DVector::from_vec(vec![0.3])),
        _ => family.tau_of_theta(&DVector::from_vec(vec![1.0, -1.0])),
    }
}

impl ExpfamFrontierParams {
    fn resolve(self, cfg: &ExperimentConfig) -> std::result::Result<ExpfamPlan, Vec<Error>> {
        let mut errs = Vec::new();
        let family = match build_family(&self.family, self.unit_costs.clone()) {
            Ok(f) => f,
            Err(e) => return Err(vec![e]),
        };
        let p = family.dim();
        let tau = match (&self.tau, &self.theta) {
            (Some(_), Some(_)) => Err(Error::Config("give either tau or theta, not both".into())),
            (Some(t), None) => Ok(DVector::from_vec(t.clone())),
            (None, Some(th)) if th.len() == p => family.tau_of_theta(&DVector::from_vec(th.clone())),
            (None, Some(th)) => Err(Error::DimensionMismatch {
                expected: format!("theta of length {p}"),
                found: th.len().to_string(),
            }),
            (None, None) => default_tau(family.as_ref()),
        };
        let tau = match tau {
            Ok(t) if t.len() != p => {
                errs.push(Error::DimensionMismatch {
                    expected: format!("tau of length {p}"),
                    found: t.len().to_string(),
                });
                None
            }
            Ok(t) => match family.theta_of_tau(&t).and_then(|_| family.fisher_info_inv(&t)) {
                Ok(_) => Some(t),
                Err(e) => {
                    errs.push(e);
                    None
                }
            },
            Err(e) => {
                errs.push(e);
                None
            }
        };
        let target = match self.target.as_str() {
            "identity" => Some(Target::identity(p)),
            "natural" => Some(Target::natural(family.clone())),
            "normal-moments" if family.name() == "normal" => Some(Target::normal_moments()),
            other => {
                errs.push(Error::out_of_range(
                    "target",
                    other,
                    "identity, natural, or normal-moments for the normal family",
                ));
                None
            }
        };
        let target = match (target, &self.q) {
            (Some(t), Some(q)) => t.with_weights(q.clone()).map_err(|e| errs.push(e)).ok(),
            (t, _) => t,
        };
        if self.n < 1 {
            errs.push(Error::out_of_range("n", self.n, ">= 1"));
        }
        if self.starts < 1 {
            errs.push(Error::out_of_range("starts", self.starts, ">= 1"));
        }
        let min_cost: f64 = family.unit_costs().iter().sum();
        let budgets = self.budget_list(min_cost, &mut errs);
        for &c in &budgets {
            if !(c.is_finite() && c + 1e-9 >= min_cost) {
                errs.push(Error::out_of_range(
                    "budget",
                    c,
                    format!(">= total unit cost {min_cost}"),
                ));
            }
        }
        match (tau, target) {
            (Some(tau), Some(target)) if errs.is_empty() => Ok(ExpfamPlan {
                params: self,
                family,
                tau,
                target,
                budgets,
                master_seed: cfg.master_seed,
            }),
            _ => Err(errs),
        }
    }

    fn budget_list(&self, min_cost: f64, errs: &mut Vec<Error>) -> Vec<f64> {
        if let Some(list) = &self.budgets {
            if self.budget_min.is_some() || self.budget_max.is_some() {
                errs.push(Error::Config(
                    "give either budgets or budget_min/budget_max, not both".into(),
                ));
            }
            if list.is_empty() {
                errs.push(Error::out_of_range("budgets", "[]", "at least one budget"));
            }
            return list.clone();
        }
        let lo = self.budget_min.unwrap_or(min_cost);
        let hi = self.budget_max.unwrap_or(min_cost * self.n as f64);
        let step = self.budget_step;
        if !(step > 0.0 && step.is_finite()) {
            errs.push(Error::out_of_range("budget_step", step, "> 0"));
            return Vec::new();
        }
        if !(lo <= hi) {
            errs.push(Error::out_of_range("budget_min", lo, format!("<= budget_max = {hi}")));
            return Vec::new();
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        if count > MAX_BUDGETS {
            errs.push(Error::out_of_range(
                "budget_step",
                step,
                format!("at most {MAX_BUDGETS} budgets"),
            ));
            return Vec::new();
        }
        (0..count).map(|i| lo + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HlParams {
    pub n: usize,
    pub alphas: Vec<f64>,
    /// Defaults to `[n/4, n/2]` rounded down to even.
    pub budgets: Option<Vec<u64>>,
    pub variants: Vec<HlVariant>,
    /// Subset size for the subset variant; defaults to `floor(sqrt(n))`.
    pub subset_m: Option<usize>,
}

impl Default for HlParams {
    fn default() -> Self {
        Self {
            n: 100,
            alphas: vec![0.05, 0.2],
            budgets: None,
            variants: HlVariant::ALL.to_vec(),
            subset_m: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HlPlan {
    pub params: HlParams,
    pub experiment: HlExperiment,
}

impl HlParams {
    fn resolve(self, cfg: &ExperimentConfig) -> std::result::Result<HlPlan, Vec<Error>> {
        let even = |x: usize| (x - x % 2).max(2) as u64;
        let budgets = self.budgets.clone().unwrap_or_else(|| {
            let mut b = vec![even(self.n / 4), even(self.n / 2)];
            b.dedup();
            b
        });
        let mut params = self;
        params.budgets = Some(budgets.clone());
        let experiment = HlExperiment {
            n: params.n,
            alphas: params.alphas.clone(),
            budgets,
            variants: params.variants.clone(),
            subset_m: params.subset_m,
            replicates: cfg.replicates,
            master_seed: cfg.master_seed,
            parallel: cfg.parallel,
        };
        let errs = experiment.validate();
        if errs.is_empty() {
            Ok(HlPlan { params, experiment })
        } else {
            Err(errs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatInvParams {
    pub rhos: Vec<f64>,
    pub n_rows: usize,
    pub p: usize,
    pub sigma2: f64,
    /// Newton–Schulz starting points to trace.
    pub ns_inits: Vec<InitMode>,
    pub ns_iters: usize,
    /// `k` for each constant power-iteration schedule.
    pub power_constant: Vec<usize>,
    /// Starting `k` for each decreasing schedule.
    pub power_decreasing: Vec<usize>,
    pub deflation: Deflation,
}

impl Default for MatInvParams {
    fn default() -> Self {
        Self {
            rhos: vec![0.01, 0.45, 0.88],
            n_rows: 100,
            p: 10,
            sigma2: 1.0,
            ns_inits: vec![InitMode::Safe],
            ns_iters: 20,
            power_constant: vec![200],
            power_decreasing: Vec::new(),
            deflation: Deflation::Hotelling,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatInvPlan {
    pub params: MatInvParams,
    pub experiment: MatInvExperiment,
}

impl MatInvParams {
    fn resolve(self, cfg: &ExperimentConfig) -> std::result::Result<MatInvPlan, Vec<Error>> {
        let mut methods: Vec<Method> = self
            .ns_inits
            .iter()
            .map(|&init| Method::NewtonSchulz {
                init,
                iters: self.ns_iters,
            })
            .collect();
        methods.extend(self.power_constant.iter().map(|&k| Method::Power {
            schedule: Schedule::Constant(k),
        }));
        methods.extend(self.power_decreasing.iter().map(|&k| Method::Power {
            schedule: Schedule::Decreasing(k),
        }));
        let experiment = MatInvExperiment {
            rhos: self.rhos.clone(),
            methods,
            n_rows: self.n_rows,
            p: self.p,
            datasets: cfg.replicates,
            sigma2: self.sigma2,
            deflation: self.deflation,
            master_seed: cfg.master_seed,
            parallel: cfg.parallel,
        };
        let mut errs = experiment.validate();
        if self
            .power_constant
            .iter()
            .chain(&self.power_decreasing)
            .any(|&k| k == 0)
        {
            errs.push(Error::out_of_range("power iterations", 0, ">= 1"));
        }
        if errs.is_empty() {
            Ok(MatInvPlan {
                params: self,
                experiment,
            })
        } else {
            Err(errs)
        }
    }
}
