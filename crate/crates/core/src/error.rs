use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("matrix is not Hermitian: entry ({row}, {col}) deviates from its conjugate partner by {deviation:e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} exceeds the supported maximum of {max}", max = crate::linalg::MAX_DIM)]
    DimensionTooLarge(usize),

    /// A configured work bound (atoms, grid points) would be exceeded.
    #[error("resource limit exceeded: {what} would exceed the bound {bound}")]
    ResourceLimit { what: String, bound: usize },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("polynomial degree {degree} exceeds the table's maximum degree {max}")]
    DegreeOverflow { degree: u32, max: u32 },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by bad input rather than exhausted limits.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::ResourceLimit { .. } | Error::Convergence(_))
    }
}
