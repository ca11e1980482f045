//! Error categories and their process exit codes. Configuration
//! mistakes exit 2 (matching clap's own usage errors), numerical
//! failures exit 3, and I/O or artifact-integrity failures exit 4.

use std::fmt;
use std::io;

use nslab_core::codec::CodecError;
use nslab_core::dataset::DatasetError;
use nslab_core::galerkin::SolverError;
use nslab_core::mlp::MlpError;
use nslab_core::sensors::SensorError;

#[derive(Debug)]
pub enum CliError {
    /// Rejected before any work started: bad flags, bad config values.
    Config(String),
    /// The computation ran and failed: instability, divergence, or a
    /// verification suite that found violations.
    Numeric(String),
    /// Reading or writing artifacts failed, including integrity checks.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numerical failure: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::DimensionMismatch { .. } | SolverError::InvalidConfig(_) => {
                CliError::Config(e.to_string())
            }
            SolverError::Unstable { .. } => CliError::Numeric(e.to_string()),
            SolverError::Io(_) | SolverError::BadMagic | SolverError::Truncated => {
                CliError::Io(e.to_string())
            }
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        // Every codec rejection names a precondition the caller chose.
        CliError::Config(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidRequest(_) => CliError::Config(e.to_string()),
            DatasetError::RecordUnstable { .. } => CliError::Numeric(e.to_string()),
            DatasetError::Solver(inner) => inner.into(),
            DatasetError::Codec(inner) => inner.into(),
            DatasetError::Io { .. }
            | DatasetError::Manifest(_)
            | DatasetError::ChecksumMismatch { .. }
            | DatasetError::PayloadSize { .. }
            | DatasetError::VersionMismatch { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<MlpError> for CliError {
    fn from(e: MlpError) -> Self {
        match e {
            MlpError::InvalidArchitecture(_)
            | MlpError::InvalidConfig(_)
            | MlpError::ShapeMismatch(_) => CliError::Config(e.to_string()),
            MlpError::Diverged { .. } | MlpError::BudgetExceeded { .. } => {
                CliError::Numeric(e.to_string())
            }
            MlpError::Io { .. }
            | MlpError::Meta(_)
            | MlpError::WeightCount { .. }
            | MlpError::VersionMismatch { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<SensorError> for CliError {
    fn from(e: SensorError) -> Self {
        match e {
            SensorError::InvalidGrid(_) | SensorError::InvalidConfig(_) => {
                CliError::Config(e.to_string())
            }
            SensorError::Exhausted { .. } => CliError::Numeric(e.to_string()),
            SensorError::Codec(inner) => inner.into(),
            SensorError::Dataset(inner) => inner.into(),
            SensorError::Solver(inner) => inner.into(),
            SensorError::Mlp(inner) => inner.into(),
        }
    }
}
