use dampwave_core::escape::EscapeError;
use dampwave_core::metric::MetricError;
use dampwave_core::solver::SolverError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Body of `error.json` and of the line printed to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub kind: &'a str,
    pub exit_code: i32,
    pub message: String,
    pub subcommand: &'a str,
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
            RunError::Verification(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Verification(_) => "verification",
            RunError::Io(_) => "io",
        }
    }

    pub fn report<'a>(&self, subcommand: &'a str) -> ErrorReport<'a> {
        ErrorReport { kind: self.kind(), exit_code: self.exit_code(), message: self.to_string(), subcommand }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        match e {
            // Grid refusals stem from the scenario file.
            SolverError::Cfl { .. } | SolverError::SpongeWidth { .. } | SolverError::InvalidGrid(_) => {
                RunError::Config(e.to_string())
            }
            SolverError::NonFinite { .. } | SolverError::CrossTerm { .. } => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<MetricError> for RunError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::NonFinite { .. } => RunError::Numerical(e.to_string()),
            MetricError::NotAfSmall { .. } | MetricError::InvalidArgument(_) => RunError::Config(e.to_string()),
        }
    }
}

impl From<EscapeError> for RunError {
    fn from(e: EscapeError) -> Self {
        match e {
            EscapeError::InvalidArgument(_) => RunError::Config(e.to_string()),
            EscapeError::Lingering { .. } => RunError::Numerical(e.to_string()),
            EscapeError::GccViolated { .. } | EscapeError::CoverInvalid { .. } | EscapeError::Exhausted { .. } => {
                RunError::Verification(e.to_string())
            }
        }
    }
}
