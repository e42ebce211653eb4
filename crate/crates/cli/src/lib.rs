//! Library side of the `simreal-opt` command-line tool.

pub mod config;
pub mod operator;
pub mod run;

use std::fmt;

pub use config::{parse_config, parse_config_str, ConfigError, ConfigErrorKind, RunConfig};

/// Why a command stopped; each maps to a stable exit code.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numerical(String),
    Aborted,
    /// Unreadable or inconsistent files, failed validation.
    Other(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Aborted => 130,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Aborted => write!(f, "aborted by operator"),
            Failure::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(format!("i/o error: {e}"))
    }
}

impl From<simreal_core::Error> for Failure {
    fn from(e: simreal_core::Error) -> Self {
        match e {
            simreal_core::Error::Aborted => Failure::Aborted,
            simreal_core::Error::InvalidArgument(m) => Failure::Other(m),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

/// Size the global worker pool from `SIMREAL_OPT_THREADS` (0 or unset = one per core).
pub fn configure_threads() {
    let n = std::env::var("SIMREAL_OPT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    if n > 0 {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
