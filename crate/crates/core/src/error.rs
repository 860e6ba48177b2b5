use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid format p={p}, q={q}: {reason}")]
    InvalidFormat { p: u32, q: u32, reason: String },
    #[error("format p={p}, q={q} violates 2 <= p <= 2^(q-1)-3")]
    Condition1 { p: u32, q: u32 },
    #[error("no adjacent float: {0}")]
    NoAdjacent(String),
    /// Division outside `0 <= x <= y < inf, y > 0`. Reaching this means a semantics bug.
    #[error("division contract violated: {x} / {y}")]
    DivDomain { x: String, y: String },
    #[error("left sum over an empty sequence")]
    EmptySum,
    #[error("non-canonical float: {0}")]
    NotCanonical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("literal {0} is not representable in the format")]
    NotRepresentable(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid permutation: {0}")]
    Permutation(String),
    #[error("index out of bounds: {0}")]
    Index(String),
    #[error("solver found no value: {0}")]
    NotFound(String),
    #[error("dimension budget exceeded: {0}")]
    Budget(String),
    #[error("equivariance violated: {0}")]
    Equivariance(String),
    #[error("value outside the alphabet: {0}")]
    Alphabet(String),
    #[error("sequence length {n} outside the supported range (max {max})")]
    Length { n: usize, max: usize },
    #[error("unknown suite: {0}")]
    UnknownSuite(String),
    #[error("construction produced a non-finite intermediate: {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
