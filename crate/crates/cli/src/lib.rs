//! The `uasim` pipeline: corpus simulation, autoencoder and diffusion
//! training, conditional generation, and statistical and link-level
//! evaluation, driven by one TOML configuration per run.
//!
//! Every run writes `<command>.manifest.json` next to its outputs.

pub mod commands;
pub mod config;
mod error;
pub mod manifest;

use std::path::PathBuf;

pub use commands::Command;
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use manifest::Manifest;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    /// Run on one thread so every artifact is bit-reproducible.
    pub deterministic: bool,
}

/// Validates the configuration, runs the command and writes its manifest.
/// Returns the manifest path.
pub fn run(opts: &RunOptions) -> Result<PathBuf> {
    let cfg = ExperimentConfig::load(opts.config.as_deref(), &opts.overrides)?;
    let cmd = opts.command;
    let checkpoints = cmd.checkpoints(&cfg)?;
    let mut inputs = cmd.inputs(&cfg)?;
    inputs.extend(checkpoints);
    // fine-tuning may write over its own input checkpoint
    let inputs = manifest::digest_inputs(&inputs)?;
    let outputs = if opts.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| CliError::Run(format!("cannot build a single-thread pool: {e}")))?;
        pool.install(|| cmd.execute(&cfg))?
    } else {
        cmd.execute(&cfg)?
    };
    let out = cfg.io.output_dir.as_path();
    let manifest = Manifest::build(cmd.name(), &cfg, opts.deterministic, inputs, out, &outputs)?;
    let path = Manifest::path_for(out, cmd.name());
    manifest.write(&path)?;
    Ok(path)
}
