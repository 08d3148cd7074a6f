//! File-based pipeline around `aquarender-core`: PNG and manifest I/O, run
//! configuration and the `render`, `gen-dataset`, `fit`, `restore` and
//! `eval` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use commands::{run, RunReport};
pub use config::{Command, RunConfig};
pub use error::{CliError, Result};

/// Builds a run configuration the way the command line does: the config
/// file first, then `--seed`, `--out` and `key=value` overrides in order.
pub fn build_config(
    command: Command,
    config: Option<&std::path::Path>,
    seed: Option<u64>,
    out: Option<&std::path::Path>,
    overrides: &[String],
) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(command, p)?,
        None => RunConfig::new(command),
    };
    if let Some(s) = seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = out {
        cfg.set("out", &o.to_string_lossy())?;
    }
    for kv in overrides {
        cfg.apply_override(kv)?;
    }
    Ok(cfg)
}
