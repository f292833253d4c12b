//! Command layer behind the `subfourier` binary: configuration, ordered
//! parallel execution and serialization of every workflow.

mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use commands::{
    cmd_classical, cmd_evolve, cmd_fit, cmd_level_dynamics, cmd_scan_r, read_scan_csv, ClassicalReport, FitReport,
    LevelsReport, ScanReport,
};
pub use config::{composite_grid, ConfigError, GridSpec, RunConfig};

/// Environment variable overriding the worker count when the config leaves it at 0.
pub const WORKERS_ENV: &str = "SUBFOURIER_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: schema mismatch: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{0}")]
    Run(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub(crate) fn run(e: impl std::fmt::Display) -> Self {
        HarnessError::Run(e.to_string())
    }
}

/// A result that is serialized rather than propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome<T> {
    pub value: Option<T>,
    pub error: Option<String>,
}

impl<T> Outcome<T> {
    pub fn ok(value: T) -> Self {
        Self { value: Some(value), error: None }
    }

    pub fn err(error: impl std::fmt::Display) -> Self {
        Self { value: None, error: Some(error.to_string()) }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Outcome<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Self::ok(v),
            Err(e) => Self::err(e),
        }
    }
}

/// Sidecar written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub file: String,
    /// `kbar` after resolving `system.period_us`.
    pub hbar_eff: f64,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// What a command wrote and the exit status it asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
    /// Human-readable lines for stderr.
    pub messages: Vec<String>,
}

/// Worker count from the config, then the environment, then all cores (0).
pub fn resolve_workers(config: &RunConfig) -> usize {
    if config.run.workers > 0 {
        return config.run.workers;
    }
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

/// Runs `f` on a dedicated pool of the configured size.
pub fn with_workers<T: Send>(config: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(config))
        .build()
        .map_err(HarnessError::run)?;
    Ok(pool.install(f))
}
