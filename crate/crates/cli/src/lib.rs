//! Batch front end over the nerfsim core: configuration, experiment runs,
//! and report files.

pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

use std::fmt;

use config::ConfigError;

/// Worker-count override for the thread pool.
pub const WORKERS_ENV: &str = "NERFSIM_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(nerfsim_core::Error),
    Io(std::io::Error),
    Usage(String),
    Validation(String),
}

impl CliError {
    /// 2 for configuration problems, 4 for an infeasible prefetch capacity,
    /// 3 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use nerfsim_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Core(E::Config(_)) => 2,
            CliError::Core(E::InfeasibleCapacity { .. }) => 4,
            CliError::Core(E::Io(_)) | CliError::Io(_) | CliError::Validation(_) => 1,
            CliError::Core(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid config: {e}"),
            CliError::Core(e) => e.fmt(f),
            CliError::Io(e) => write!(f, "io: {e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<nerfsim_core::Error> for CliError {
    fn from(e: nerfsim_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
