use thiserror::Error;

/// Errors raised by the discretisation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate geometry: level set vanishes identically on element {element}")]
    DegenerateGeometry { element: usize },

    #[error("cut element {element} cannot be connected to an interior element")]
    UnstabilisableGeometry { element: usize },

    #[error("inconsistent stabilisation on block {block}: kernel dimension {found}, expected {expected}")]
    InconsistentStabilisation {
        block: usize,
        expected: usize,
        found: usize,
    },

    #[error("degenerate operator on element {element}: kernel dimension {found}, expected {expected}")]
    DegenerateOperator {
        element: usize,
        expected: usize,
        found: usize,
    },

    #[error("a non-zero source cannot be represented by Laplacians of degree {degree} polynomials")]
    UnrepresentableSource { degree: usize },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{case} at level {level}: {source}")]
    Run {
        case: String,
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the error (or the error wrapped by a run context) is numerical
    /// rather than caused by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure(_)
            | Error::NonConvergence { .. }
            | Error::DegenerateOperator { .. }
            | Error::InconsistentStabilisation { .. }
            | Error::Internal(_) => true,
            Error::Run { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
