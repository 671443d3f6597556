use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("point {point:?} is within {tol:e} A of atom {atom}")]
    Singularity {
        atom: usize,
        point: [f64; 3],
        tol: f64,
    },

    #[error("point {0:?} lies outside the grid")]
    Domain([f64; 3]),

    #[error("interface file error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("line assembly failed: {0}")]
    Assembly(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solution diverged at step {step} (t = {t}): {reason}")]
    Divergence { step: usize, t: f64, reason: String },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
