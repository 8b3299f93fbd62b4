use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid opening k={k}, l={l}: need 1 <= k <= l")]
    InvalidOpening { k: usize, l: usize },

    #[error("word carries {len} trits per side but the opening inspects {needed}")]
    InsufficientResolution { len: usize, needed: usize },

    #[error("{needed} trits of resolution required, at most {max} supported")]
    ResolutionExceeded { needed: usize, max: usize },

    #[error("non-positive area {area} at t={t}")]
    NonPositiveArea { t: usize, area: f64 },

    #[error("{0} is not a power of 3")]
    NotPowerOfThree(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver failed: {0}")]
    Solver(String),

    #[error("right-eigenvector matrix is numerically singular (1-norm condition estimate {condition:.3e})")]
    Defective { condition: f64 },

    #[error("resonance {index} is near-defective: unit-normalized overlap |<L|R>| = {overlap:.3e}")]
    NearDefective { index: usize, overlap: f64 },

    #[error("phase-space grid is identically zero")]
    ZeroGrid,

    #[error("malformed operator file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
