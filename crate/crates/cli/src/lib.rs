//! Command-line front end for the banditlab Monte Carlo experiments.
//!
//! Each subcommand reads a [`RunConfig`], runs one experiment family and
//! writes CSV (or JSON) tables plus a `run.json` echo of the resolved
//! configuration into the output directory.

use std::path::PathBuf;

use thiserror::Error;

pub mod commands;
pub mod config;
pub mod table;

pub use config::{Command, Format, Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Write { .. } => EXIT_FAILED,
            _ => EXIT_CONFIG,
        }
    }
}

/// Result of [`execute`].
#[derive(Debug)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
    /// Failure reasons copied from the tables.
    pub failures: Vec<String>,
}

/// Loads, resolves and validates the configuration for `command`.
pub fn load_config(
    command: Command,
    path: Option<&std::path::Path>,
    overrides: &Overrides,
    env_seed: Option<&str>,
) -> Result<RunConfig, CliError> {
    let base = match path {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    base.resolve(command, overrides, env_seed)
}

/// Runs a resolved configuration and writes every output file.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.clone(),
        source,
    })?;
    let echo = serde_json::json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    let run_path = dir.join("run.json");
    let mut body = serde_json::to_string_pretty(&echo).expect("json value");
    body.push('\n');
    table::write_file(&run_path, body.as_bytes())?;

    let mut files = vec![run_path];
    let mut failures = Vec::new();
    for t in commands::run(command, cfg) {
        files.push(t.write(dir, cfg.format)?);
        if let Some(reason) = &t.failed {
            failures.push(format!("{}: {reason}", t.name));
        }
    }
    Ok(Report {
        files,
        exit_code: if failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_FAILED
        },
        failures,
    })
}
