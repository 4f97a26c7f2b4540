use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dense realization of {n} qubits exceeds the cap of {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("invalid Pauli string {0:?}: only the letters I, X, Y, Z are allowed")]
    PauliParse(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("non-finite coefficient at index {0}")]
    NonFinite(usize),

    #[error("state is not faithful: smallest eigenvalue {0:e}")]
    NotFaithful(f64),

    #[error("matrix is not positive definite: smallest eigenvalue {0:e}")]
    NotPositiveDefinite(f64),

    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("missing commuting decomposition")]
    MissingDecomposition,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
