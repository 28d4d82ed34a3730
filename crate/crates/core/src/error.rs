use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-finite signal value at point {index}")]
    Evaluation { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("eigensolver did not converge after {iterations} mat-vecs (max residual {max_residual:.3e}, tolerance {tolerance:.3e})")]
    Solver {
        iterations: usize,
        max_residual: f64,
        tolerance: f64,
    },

    #[error("spectral radius estimate {estimate:.6} exceeds Chebyshev domain {domain_max:.6}")]
    Domain { estimate: f64, domain_max: f64 },

    #[error("no continuum oracle: {0}")]
    UnsupportedOracle(String),

    #[error("cannot normalize layer {layer}: {reason}")]
    Normalization { layer: usize, reason: String },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}
