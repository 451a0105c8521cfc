//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by mesh handling, model assembly, sampling, and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// A file or configuration document could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Mesh validation failed (degenerate or non-conforming elements,
    /// out-of-range node indices, ...).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A parameter violates its domain constraints.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A query location lies outside the mesh hull.
    #[error("location ({0:?}) outside mesh")]
    OutsideMesh(Vec<f64>),

    /// A requested feature is outside the supported model class
    /// (e.g. rotation parameters with p > 3, operator exponents not in {2, 4}).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Numerical failure: Cholesky breakdown, quadrature non-convergence,
    /// diverging optimisation iterates.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that indicate bad inputs rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}
