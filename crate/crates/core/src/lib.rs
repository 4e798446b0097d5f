//! Risk versus computation time for budget-constrained estimators.
//!
//! Every estimator in this crate comes with an explicit cost ledger (data
//! looks, comparisons, vector multiplies) and a closed-form or Monte Carlo
//! risk, so that estimators can be placed on a risk/computation plane and
//! optimal allocations traced across budgets.
//!
//! - [`cost`]: abstract operation counts, ledgers and sample allocations.
//! - [`mc`]: reproducible random streams and replicate-level risk estimation.
//! - [`normal`]: mean/variance estimation under look budgets for normal data.
//! - [`expfam`]: subset sufficient statistics for exponential families and the
//!   budgeted allocation optimizer.
//! - [`robust`]: budget-capped Hodges-Lehmann estimators with comparison-counted
//!   median selection.
//! - [`matinv`]: anytime matrix inversion (Newton-Schulz, deflated power
//!   iteration) and its effect on least-squares risk.
//! - [`io`]: experiment configuration, result tables and the command-line
//!   front end.
//!
//! The `examples/` directory of this crate has one runnable program per
//! capability:
//!
//! ```bash
//! cargo run --release -p riskcomp --example normal_frontier
//! cargo run --release -p riskcomp --example hodges_lehmann
//! cargo run --release -p riskcomp --example matrix_inversion
//! ```

pub mod cost;
pub mod error;
pub mod expfam;
pub mod io;
pub mod matinv;
pub mod mc;
pub mod normal;
pub mod robust;

pub use cost::{Allocation, CostCategory, CostLedger, CostUnit, GeneralAllocation};
pub use error::{Error, Result};
pub use mc::{derive_stream, McConfig, RiskEstimate, RngStream};
