//! Batch experiment runner: configuration, pipelines, artifacts and the
//! acceptance suite.

pub mod commands;
pub mod config;
pub mod output;
pub mod suite;

use std::path::Path;

use anyhow::Result;

pub use commands::Outcome;
pub use config::{Command, ExperimentConfig};
pub use output::RunManifest;

/// Runs `command` with `cfg`, writing artifacts and the manifest to `dir`.
pub fn execute(command: Command, cfg: &ExperimentConfig, dir: &Path) -> Result<(Outcome, RunManifest)> {
    let mut cfg = cfg.clone();
    cfg.command = Some(command);
    cfg.output_dir = dir.to_path_buf();
    cfg.validate()?;
    let mut out = output::Output::create(dir)?;
    let outcome = commands::run(command, &cfg, &mut out)?;
    let manifest = out.finish(&cfg, command.name())?;
    Ok((outcome, manifest))
}
