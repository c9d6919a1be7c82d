//! Command-line front end: CSV bundles in and out, TOML run configuration,
//! and subcommands wrapping the synthesis pipeline.

pub mod bundle;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::Parser;
use relsyn_core::baseline::BaselineError;
use relsyn_core::marginals::MarginalError;
use relsyn_core::orchestrator::OrchestratorError;
use relsyn_core::privacy::PrivacyError;
use relsyn_core::projection::ProjectionError;
use relsyn_core::relational::RelationalError;
use relsyn_core::sampler::SamplerError;
use thiserror::Error;

pub use bundle::{Bundle, BundleFiles, BundleManifest, ColumnDictionary, LoadOptions, SaveContext};
pub use commands::{Cli, Command};
pub use config::CliConfig;

/// Failures grouped by exit code: 1 for bad invocations or configs, 2 for
/// unreadable or inconsistent data, 3 for privacy budget violations.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Budget(_) => 3,
        }
    }
}

impl From<PrivacyError> for CliError {
    fn from(e: PrivacyError) -> Self {
        CliError::Budget(e.to_string())
    }
}

impl From<RelationalError> for CliError {
    fn from(e: RelationalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MarginalError> for CliError {
    fn from(e: MarginalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ProjectionError> for CliError {
    fn from(e: ProjectionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Privacy(p) => p.into(),
            OrchestratorError::Relational(r) => r.into(),
            OrchestratorError::SchemaMismatch { .. } | OrchestratorError::EmptyRealDatabase => {
                CliError::Data(e.to_string())
            }
            OrchestratorError::Marginal(_)
            | OrchestratorError::Projection(_)
            | OrchestratorError::Sampler(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Privacy(p) => p.into(),
            BaselineError::Relational(r) => r.into(),
            BaselineError::EmptyTable => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Parses `args` and runs the requested subcommand, returning the process
/// exit code. Help and version requests exit 0.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
