use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid size {0}: expected a power of two >= 16")]
    InvalidGrid(usize),

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("convexity lost: min radius of curvature {min_radius:e}")]
    ConvexityLost { min_radius: f64 },

    #[error("center ({0}, {1}) is not strictly inside the curve")]
    CenterOutside(f64, f64),

    #[error("entropy maximization failed: {0}")]
    OptimizerFailed(String),

    #[error("parameter out of domain: {0}")]
    DomainError(String),

    #[error("integration failed: {0}")]
    IntegrationFailed(String),

    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),

    #[error("eigen-solver failure: {0}")]
    SolverFailure(String),

    #[error("degenerate samples: {0} consecutive near-zero values")]
    DegenerateSamples(usize),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("extinction at t = {time}")]
    Extinction { time: f64 },

    #[error("expansion out of range: sup|h^(1/a) r[v]| = {0}")]
    OutOfRange(f64),

    #[error("resonance: lambda + delta = {0:e}")]
    ResonanceError(f64),

    #[error("contraction diverged in layer {layer} after {iterations} iterations (last change {last_change:e})")]
    ContractionDiverged {
        layer: usize,
        iterations: usize,
        last_change: f64,
    },

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("insufficient decay for mode {0}")]
    InsufficientDecay(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::NonFinite(_) => "NonFinite",
            Error::ConvexityLost { .. } => "ConvexityLost",
            Error::CenterOutside(..) => "CenterOutside",
            Error::OptimizerFailed(_) => "OptimizerFailed",
            Error::DomainError(_) => "DomainError",
            Error::IntegrationFailed(_) => "IntegrationFailed",
            Error::RootNotBracketed(_) => "RootNotBracketed",
            Error::SolverFailure(_) => "SolverFailure",
            Error::DegenerateSamples(_) => "DegenerateSamples",
            Error::LinearSolveFailure(_) => "LinearSolveFailure",
            Error::Extinction { .. } => "Extinction",
            Error::OutOfRange(_) => "OutOfRange",
            Error::ResonanceError(_) => "ResonanceError",
            Error::ContractionDiverged { .. } => "ContractionDiverged",
            Error::ModeMismatch(_) => "ModeMismatch",
            Error::InsufficientDecay(_) => "InsufficientDecay",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }

    /// Process exit code: 2 for invalid input, 3 for numerical or i/o failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::NonFinite(_)
            | Error::CenterOutside(..)
            | Error::DomainError(_)
            | Error::OutOfRange(_)
            | Error::ModeMismatch(_)
            | Error::Config(_) => 2,
            _ => 3,
        }
    }
}
