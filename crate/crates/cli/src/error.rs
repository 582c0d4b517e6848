use std::path::PathBuf;

use noncanon::amplitude::AmplitudeError;
use noncanon::combinatorics::CombinatoricsError;
use noncanon::model::ModelError;
use noncanon::propagator::PropagatorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or out-of-range configuration; `key` names the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Config { key: key.into(), message: message.to_string() }
    }

    /// 2 for configuration, 3 for resource caps, 1 for everything numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Resource(_) => 3,
            CliError::Numerical(_) | CliError::Io { .. } => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::config("params", e)
    }
}

impl From<AmplitudeError> for CliError {
    fn from(e: AmplitudeError) -> Self {
        match e {
            AmplitudeError::TupleCap { .. } => CliError::Resource(e.to_string()),
            AmplitudeError::NonConvergent { .. } | AmplitudeError::Csv(_) => CliError::Numerical(e.to_string()),
            AmplitudeError::BadCoupling(_) => CliError::config("params.C", e),
            AmplitudeError::BadStep { .. } => CliError::config("params.h", e),
            AmplitudeError::TooFewSamples { .. } => CliError::config("params.samples", e),
            _ => CliError::config("params", e),
        }
    }
}

impl From<CombinatoricsError> for CliError {
    fn from(e: CombinatoricsError) -> Self {
        match e {
            CombinatoricsError::UndefinedConditional(_) | CombinatoricsError::Csv(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::config("params", e),
        }
    }
}

impl From<PropagatorError> for CliError {
    fn from(e: PropagatorError) -> Self {
        match e {
            PropagatorError::Model(_) => CliError::config("params.profile", e),
            PropagatorError::BadRadius(_) => CliError::config("params.r", e),
            PropagatorError::BadCutoff(_) => CliError::config("params.eps_lo", e),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
