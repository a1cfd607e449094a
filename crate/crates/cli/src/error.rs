use std::path::PathBuf;

use nwn_core::dataio::DataError;
use nwn_core::dynamics::DynamicsError;
use nwn_core::metrics::MetricsError;
use nwn_core::netgen::NetgenError;
use nwn_core::pipeline::PipelineError;
use thiserror::Error;

/// Failure of a subcommand, each kind with a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("manifest {0} lists no granules")]
    EmptyManifest(PathBuf),
    #[error("benchmark needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("{0}")]
    MissingBand(String),
    #[error("device file {path}: {reason}")]
    MissingNet { path: PathBuf, reason: String },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Output { .. } => 3,
            CliError::EmptyManifest(_) => 4,
            CliError::TooFewRuns(_) => 5,
            CliError::MissingBand(_) => 6,
            CliError::MissingNet { .. } => 7,
            CliError::Other(_) => 1,
        }
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output { path: path.into(), source }
    }
}

impl From<NetgenError> for CliError {
    fn from(e: NetgenError) -> Self {
        match e {
            NetgenError::InvalidParams(_) | NetgenError::OddGrid(_) => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::InvalidParams(_) => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e.root() {
            DataError::MissingBand { .. } => CliError::MissingBand(e.to_string()),
            DataError::InvalidSynth(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidConfig(_) | PipelineError::InputMismatch { .. } => CliError::Config(e.to_string()),
            PipelineError::Data(d) => d.into(),
            PipelineError::Dynamics(d) => d.into(),
            PipelineError::Io { path, source } => CliError::Output { path, source },
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::TooFewRuns(n) => CliError::TooFewRuns(n),
            MetricsError::EmptyGrid | MetricsError::UnsortedGrid(_) | MetricsError::InvalidProjection(_) => {
                CliError::Config(e.to_string())
            }
            MetricsError::Data(d) => d.into(),
            MetricsError::Pipeline(p) => p.into(),
            MetricsError::Io { path, source } => CliError::Output { path, source },
            other => CliError::Other(other.to_string()),
        }
    }
}
