//! Experiment runner for the `kspde` solvers: TOML configs in, CSV reports out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::run_experiment;
pub use report::{Check, Relation, Report};

/// Directory a report is written to under `out`.
pub fn report_dir(cfg: &ExperimentConfig, out: &Path) -> PathBuf {
    out.join(cfg.output.clone().unwrap_or_else(|| PathBuf::from(&cfg.name)))
}

/// Runs `cfg` and writes its report under `out`.
pub fn run_and_write(cfg: &ExperimentConfig, out: &Path, markdown: bool) -> Result<Report> {
    let report = run_experiment(cfg)?;
    report.write(&report_dir(cfg, out), markdown)?;
    Ok(report)
}
