use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} evaluated at its singular point")]
    Singular { what: &'static str },

    #[error("grid function does not live on the operator's {side} grid")]
    GridMismatch { side: &'static str },

    #[error(
        "oscillation not resolved: lambda * h * lip = {product:.4} exceeds {limit:.4} \
         (lambda = {lambda}, h = {cell_width:.3e}, lip = {lipschitz:.4})"
    )]
    UnresolvedOscillation {
        product: f64,
        limit: f64,
        lambda: f64,
        cell_width: f64,
        lipschitz: f64,
    },

    #[error("source and target nodes are {distance:.3e} apart, below the required {required:.3e}")]
    NodesTooClose { distance: f64, required: f64 },

    #[error("decay fit needs at least 3 points, got {found}")]
    TooFewPoints { found: usize },

    #[error("decay fit needs positive norms, point {index} has {value}")]
    NonPositiveNorm { index: usize, value: f64 },

    #[error("lambda values must be strictly increasing (point {index})")]
    UnorderedLambda { index: usize },

    #[error("{what} under-resolved: {cells:.2} cells across its radius, need at least {required}")]
    UnderResolved {
        what: &'static str,
        cells: f64,
        required: f64,
    },

    #[error("{what} does not fit inside the grid box")]
    OutsideGrid { what: &'static str },

    #[error("parameters outside the hypothesis of {regime}: {reason}")]
    Hypothesis {
        regime: &'static str,
        reason: String,
    },

    #[error("closed forms disagree: {first} vs {second}")]
    Inconsistent { first: f64, second: f64 },

    #[error("empty {what}")]
    Empty { what: &'static str },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
