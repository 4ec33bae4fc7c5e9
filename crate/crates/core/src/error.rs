//! Error categories shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("feasible set is empty")]
    EmptyFeasibleSet,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("gradient tape does not belong to the current parameters")]
    StaleTape,
    #[error("invalid application graph: {0}")]
    InvalidDag(String),
    #[error("infeasible action: resource {resource} for app {app} task {task}")]
    InfeasibleAction {
        app: usize,
        task: usize,
        resource: usize,
    },
    #[error("environment state: {0}")]
    Environment(String),
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short category label used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::ShapeMismatch(_) | Error::StaleTape | Error::NonFinite(_) => "numeric",
            Error::InvalidDag(_) | Error::SizeCap(_) => "workload",
            Error::EmptyFeasibleSet
            | Error::InfeasibleAction { .. }
            | Error::Environment(_)
            | Error::EmptyInput(_) => "simulation",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "config" => 2,
            "parse" => 3,
            "io" => 4,
            "numeric" => 5,
            "workload" => 6,
            _ => 7,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
