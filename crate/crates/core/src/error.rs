use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("invalid problem size: {0}")]
    InvalidSize(String),

    #[error("cost matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}, trace {trace:.3e})")]
    NotPsd { min_eig: f64, trace: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown solver `{0}`")]
    UnknownSolver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
