use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular or not positive definite: {0}")]
    SingularMatrix(String),

    #[error("line search did not find an acceptable step after {trials} trials")]
    LineSearchStall { trials: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: feature index {index} exceeds dimension {dim}")]
    Dimension { line: usize, index: usize, dim: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
