use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    /// A step was requested on a slab whose exact region is already a single site.
    #[error("cone exactness violated: {0}")]
    ConeExactness(String),

    #[error("region not covered: {0}")]
    Coverage(String),

    #[error("enumeration too large: {0}")]
    Combinatorial(String),

    #[error("memory budget exceeded: {0}")]
    MemoryBudget(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::EstimationFailure(_) => "estimation-failure",
            Error::ConeExactness(_) => "cone-exactness",
            Error::Coverage(_) => "coverage",
            Error::Combinatorial(_) => "combinatorial",
            Error::MemoryBudget(_) => "memory-budget",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Serde(_) | Error::Csv(_) => "serialization",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 2,
            Error::Config(_) => 3,
            Error::EstimationFailure(_) => 4,
            Error::ConeExactness(_) => 5,
            Error::Coverage(_) => 6,
            Error::Combinatorial(_) => 7,
            Error::MemoryBudget(_) => 8,
            Error::Io(_) | Error::Serde(_) | Error::Csv(_) => 9,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
