use thiserror::Error;

/// Errors reported by the library. Configuration problems map to CLI exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("theta series needs Im(tau) > 0, got {0}")]
    NonPositiveImTau(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("LDL^T breakdown at pivot {index} (|d| = {pivot:e}) even after perturbing the shift")]
    Breakdown { index: usize, pivot: f64 },
    #[error("cutoff too large: {0}")]
    CutoffTooLarge(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
