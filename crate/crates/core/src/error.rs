use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("implicit stage did not converge after {iterations} iterations (residual norm {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("singular parameters: {0}")]
    Singular(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn not_applicable(msg: impl Into<String>) -> Self {
        Error::NotApplicable(msg.into())
    }

    /// Process exit code for this error category: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Unknown { .. } => 2,
            Error::Io(_) | Error::Csv(_) => 4,
            Error::InvalidParameter(_)
            | Error::SolverDivergence { .. }
            | Error::Singular(_)
            | Error::NotApplicable(_)
            | Error::InsufficientData(_) => 3,
        }
    }
}
