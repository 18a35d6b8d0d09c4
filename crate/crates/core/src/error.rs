use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),

    #[error("LP solver failed: {0}")]
    NumericalFailure(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("no dual bound available for row {row}: the row of B is entirely zero")]
    BoundUnavailable { row: usize },

    #[error("separation mode does not match the instance: {0}")]
    ModeMismatch(String),

    #[error("Newton root search did not converge within {iterations} iterations")]
    NewtonStall { iterations: usize },

    #[error("{binaries} binary variables exceed the enumeration limit of {limit}")]
    EnumerationTooLarge { binaries: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
