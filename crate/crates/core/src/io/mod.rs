//! Configuration files, result tables and the command-line interface.

pub mod cli;
pub mod config;
pub mod run;
pub mod table;

pub use cli::{run_cli, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
pub use config::{ExperimentConfig, ExperimentKind, OutputFormat, Plan};
pub use run::{run, run_plan};
pub use table::{sidecar_path, Cell, Column, ColumnKind, Metadata, ResultTable};
