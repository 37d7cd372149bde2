//! Configuration, dataset I/O, training/verification pipelines and report
//! files behind the `efgen` command-line tool.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod report;

use std::path::Path;

use thiserror::Error;

pub use commands::{run_generate, run_report, run_train, run_verify, Progress};
pub use config::{DataSource, ExperimentConfig, InitStrategy, ModelSpec, OutputConfig, VerificationConfig};
pub use report::{Report, Verdict, VerdictStatus};

pub const NUM_THREADS_ENV: &str = "EFGEN_NUM_THREADS";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    /// Bad config, bad input file or unsupported request.
    #[error("{0}")]
    Config(String),
    /// Numerical or output failure.
    #[error("{0}")]
    Internal(String),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        HarnessError::Internal(msg.into())
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Internal(format!("{}: {e}", path.display()))
    }

    pub fn message(&self) -> &str {
        match self {
            HarnessError::Config(m) | HarnessError::Internal(m) => m,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Internal(_) => 1,
        }
    }
}

impl From<crate::Error> for HarnessError {
    fn from(e: crate::Error) -> Self {
        HarnessError::Internal(e.to_string())
    }
}

/// Parses a thread cap as found in `EFGEN_NUM_THREADS`.
pub fn parse_thread_cap(value: &str) -> Result<usize, HarnessError> {
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(HarnessError::config(format!(
            "{NUM_THREADS_ENV} must be a positive integer, got '{value}'"
        ))),
    }
}

/// Caps the global rayon pool from `EFGEN_NUM_THREADS` when it is set.
pub fn configure_threads() -> Result<Option<usize>, HarnessError> {
    let Ok(value) = std::env::var(NUM_THREADS_ENV) else {
        return Ok(None);
    };
    let n = parse_thread_cap(&value)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::internal(format!("thread pool: {e}")))?;
    Ok(Some(n))
}
