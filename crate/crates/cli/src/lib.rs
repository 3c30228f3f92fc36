//! Experiment runner behind the `cogmac` binary: config parsing, scenario
//! dispatch and CSV output.

pub mod config;
pub mod error;
pub mod run;
pub mod table;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, Overrides, Scenario};
pub use error::CliError;

/// Runs the experiment and writes `summary.csv`, `trace.csv` and, for the
/// un-slotted scenarios, `channels.csv` into the output directory. Returns
/// the written paths.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let report = run::run(cfg)?;
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut written = Vec::new();
    let mut emit = |name: &str, table: &table::Table| -> Result<(), CliError> {
        let path = dir.join(name);
        table.write_file(&path)?;
        written.push(path);
        Ok(())
    };
    emit("summary.csv", &report.summary)?;
    emit("trace.csv", &report.trace)?;
    if let Some(channels) = &report.channels {
        emit("channels.csv", channels)?;
    }
    Ok(written)
}

/// Loads a config file and applies the command-line overrides.
pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}
