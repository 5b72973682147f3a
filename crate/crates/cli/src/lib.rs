//! Experiment driver behind the `wl` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

pub use commands::{run_subcommand, sweep_report, CliError, Subcommand};
pub use config::{ConfigError, ExperimentConfig, Overrides, Resolved};
pub use output::{emit_convergence_table, RunOutput, SweepReport, SweepRow};

/// Loads the config (or the defaults), applies the flags and validates.
pub fn prepare(cmd: Subcommand, config: Option<&Path>, overrides: &Overrides) -> Result<Resolved, ConfigError> {
    let (mut cfg, text) = match config {
        Some(p) => config::load(p)?,
        None => (ExperimentConfig::default(), String::new()),
    };
    cfg.apply(overrides);
    cfg.resolve(&text, cmd == Subcommand::Simulate)
}

/// Runs `cmd` on a pool of the configured size and writes its reports.
pub fn execute(cmd: Subcommand, r: &Resolved) -> Result<(RunOutput, Vec<PathBuf>), CliError> {
    let run = || run_subcommand(cmd, r);
    let out = match r.config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Invariant(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let files = out.write(&r.out)?;
    Ok((out, files))
}
