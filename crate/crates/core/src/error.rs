use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {stage}{}", at_step(.step))]
    NonFinite { stage: String, step: Option<usize> },

    #[error("tangent volume collapsed: |R[{column},{column}]| below 1e-30{}", at_step(.step))]
    RankDegenerate { column: usize, step: Option<usize> },

    #[error("singular triangular solve: diagonal entry {index} is zero or subnormal{}", at_step(.step))]
    SingularSolve { index: usize, step: Option<usize> },

    #[error("coefficient column {column} vanished{}", at_step(.step))]
    DegenerateCoefficient { column: usize, step: Option<usize> },

    #[error(
        "orbit not near equilibrium at step {step}: |g(u)|_inf = {residual:e} >= {tolerance:e}; increase N1"
    )]
    NotNearEquilibrium {
        step: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("trajectory never reached xy radius {radius}; largest radius attained {max_radius:e}")]
    RadiusNotReached { radius: f64, max_radius: f64 },
}

fn at_step(step: &Option<usize>) -> String {
    match step {
        Some(n) => format!(" at step {n}"),
        None => String::new(),
    }
}

impl Error {
    /// Attaches a step index to the variants that carry one.
    pub fn at_step(self, n: usize) -> Self {
        match self {
            Error::NonFinite { stage, .. } => Error::NonFinite {
                stage,
                step: Some(n),
            },
            Error::RankDegenerate { column, .. } => Error::RankDegenerate {
                column,
                step: Some(n),
            },
            Error::SingularSolve { index, .. } => Error::SingularSolve {
                index,
                step: Some(n),
            },
            Error::DegenerateCoefficient { column, .. } => Error::DegenerateCoefficient {
                column,
                step: Some(n),
            },
            other => other,
        }
    }

    /// Short machine-readable identifier for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DIMENSION",
            Error::InvalidArgument(_) => "ARGUMENT",
            Error::NonFinite { .. } => "NON_FINITE",
            Error::RankDegenerate { .. } => "RANK_DEGENERATE",
            Error::SingularSolve { .. } => "SINGULAR_SOLVE",
            Error::DegenerateCoefficient { .. } => "DEGENERATE_COEFFICIENT",
            Error::NotNearEquilibrium { .. } => "NOT_NEAR_EQUILIBRIUM",
            Error::NotFound(_) => "NOT_FOUND",
            Error::RadiusNotReached { .. } => "RADIUS_NOT_REACHED",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
