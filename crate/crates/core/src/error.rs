use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("expectation value has imaginary part {0:e}")]
    ImaginaryExpectation(f64),

    #[error("{name} = {value} is outside its valid range")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("ill-conditioned point: {0}")]
    IllConditioned(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("protocol stage out of order: expected {expected}, session is at {actual}")]
    StageOrder {
        expected: &'static str,
        actual: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
