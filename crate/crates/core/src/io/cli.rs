//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind, OutputFormat};
use super::run::run_plan;
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "riskcomp", version, about = "Risk versus computation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal normal mean/variance allocations across budgets.
    NormalFrontier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<u64>>,
        #[arg(long)]
        tie_break: Option<String>,
        #[arg(long)]
        solver: Option<String>,
        /// Split point for streaming mode.
        #[arg(long)]
        s: Option<u64>,
    },
    /// Optimal statistic subsets for an exponential family.
    ExpfamFrontier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        family: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        tau: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        unit_costs: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<f64>>,
    },
    /// Budgeted Hodges–Lehmann estimators under contamination.
    Hl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long)]
        subset_m: Option<u64>,
    },
    /// Iterative inverses of a Gram matrix in least squares.
    Matinv {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        #[arg(long)]
        n_rows: Option<u64>,
        #[arg(long)]
        p: Option<u64>,
        #[arg(long)]
        ns_iters: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        power_constant: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        power_decreasing: Option<Vec<u64>>,
        #[arg(long)]
        deflation: Option<String>,
    },
    /// Check a configuration file and list every problem.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Output file; results go to stdout as CSV when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Run replicates on one thread.
    #[arg(long)]
    serial: bool,
    /// Any parameter, as a TOML value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn put<T: serde::Serialize>(params: &mut Vec<(&'static str, Value)>, key: &'static str, v: Option<T>) {
    if let Some(v) = v {
        params.push((key, json!(v)));
    }
}

fn build_config(kind: ExperimentKind, common: Common, params: Vec<(&'static str, Value)>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.experiment != kind {
                return Err(Error::Config(format!(
                    "{} configures `{}`, not `{}`",
                    path.display(),
                    cfg.experiment.as_str(),
                    kind.as_str()
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    if let Some(out) = common.out {
        cfg.output_path = Some(out);
    }
    if let Some(f) = common.format {
        cfg.format = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    if common.serial {
        cfg.parallel = false;
    }
    for s in &common.sets {
        cfg.set_parameter_str(s)?;
    }
    for (k, v) in params {
        cfg.set_parameter(k, v);
    }
    Ok(cfg)
}

fn config_from(command: Command) -> Result<ExperimentConfig> {
    let mut p = Vec::new();
    match command {
        Command::NormalFrontier {
            common,
            mode,
            mu,
            sigma2,
            n,
            budgets,
            tie_break,
            solver,
            s,
        } => {
            put(&mut p, "mode", mode);
            put(&mut p, "mu", mu);
            put(&mut p, "sigma2", sigma2);
            put(&mut p, "n", n);
            put(&mut p, "budgets", budgets);
            put(&mut p, "tie_break", tie_break);
            put(&mut p, "solver", solver);
            put(&mut p, "s", s);
            build_config(ExperimentKind::NormalFrontier, common, p)
        }
        Command::ExpfamFrontier {
            common,
            family,
            tau,
            theta,
            target,
            q,
            unit_costs,
            n,
            budgets,
        } => {
            put(&mut p, "family", family);
            put(&mut p, "tau", tau);
            put(&mut p, "theta", theta);
            put(&mut p, "target", target);
            put(&mut p, "q", q);
            put(&mut p, "unit_costs", unit_costs);
            put(&mut p, "n", n);
            put(&mut p, "budgets", budgets);
            build_config(ExperimentKind::ExpfamFrontier, common, p)
        }
        Command::Hl {
            common,
            n,
            alphas,
            budgets,
            variants,
            subset_m,
        } => {
            put(&mut p, "n", n);
            put(&mut p, "alphas", alphas);
            put(&mut p, "budgets", budgets);
            put(&mut p, "variants", variants);
            put(&mut p, "subset_m", subset_m);
            build_config(ExperimentKind::Hl, common, p)
        }
        Command::Matinv {
            common,
            rhos,
            n_rows,
            p: dim,
            ns_iters,
            power_constant,
            power_decreasing,
            deflation,
        } => {
            put(&mut p, "rhos", rhos);
            put(&mut p, "n_rows", n_rows);
            put(&mut p, "p", dim);
            put(&mut p, "ns_iters", ns_iters);
            put(&mut p, "power_constant", power_constant);
            put(&mut p, "power_decreasing", power_decreasing);
            put(&mut p, "deflation", deflation);
            build_config(ExperimentKind::Matinv, common, p)
        }
        Command::Validate { .. } => unreachable!("handled by the caller"),
    }
}

fn report_config_errors(errs: &[Error], err: &mut dyn Write) {
    for e in errs {
        let _ = writeln!(err, "error: {e}");
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    if let Command::Validate { config, sets } = cli.command {
        let cfg = ExperimentConfig::load(&config).and_then(|mut cfg| {
            sets.iter().try_for_each(|s| cfg.set_parameter_str(s))?;
            Ok(cfg)
        });
        let errs = match cfg {
            Ok(cfg) => cfg.validate(),
            Err(e) => vec![e],
        };
        if errs.is_empty() {
            let _ = writeln!(out, "ok");
            return EXIT_OK;
        }
        report_config_errors(&errs, err);
        return EXIT_CONFIG;
    }
    let cfg = match config_from(cli.command) {
        Ok(cfg) => cfg,
        Err(e) => {
            report_config_errors(&[e], err);
            return EXIT_CONFIG;
        }
    };
    let plan = match cfg.resolve() {
        Ok(plan) => plan,
        Err(errs) => {
            report_config_errors(&errs, err);
            return EXIT_CONFIG;
        }
    };
    let written = run_plan(&cfg, &plan).and_then(|table| match &cfg.output_path {
        Some(path) => table.write(path, cfg.format),
        None => {
            let text = match cfg.format {
                OutputFormat::Csv => table.to_csv_string()?,
                OutputFormat::Json => table.to_json_string(),
            };
            out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    });
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}
