use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or series did not reach the requested tolerance.
    #[error("numerical error in {what}: achieved {achieved:e}, requested {requested:e}")]
    Numerical {
        what: String,
        achieved: f64,
        requested: f64,
    },

    /// A root finder could not bracket or converge.
    #[error("solver error: {0}")]
    Solver(String),

    /// A numerically constructed fundamental solution is not admissible.
    #[error("construction error: {0}")]
    Construction(String),

    /// The assembled value function fails its smoothness checks.
    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    /// Input data could not be ingested.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Domain(_) => "domain",
            Self::Numerical { .. } => "numerical",
            Self::Solver(_) => "solver",
            Self::Construction(_) => "construction",
            Self::Assembly(_) => "assembly",
            Self::Calibration(_) => "calibration",
            Self::Ingestion(_) => "ingestion",
            Self::Simulation(_) => "simulation",
            Self::Config(_) => "config",
            Self::Io(_) => "io",
            Self::Csv(_) => "csv",
            Self::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
