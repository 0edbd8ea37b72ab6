use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Laplace scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NonSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph file line {line}: {message}")]
    GraphParse { line: usize, message: String },

    #[error("initial states are not adjacent: they differ at clients {0:?}")]
    NotAdjacent(Vec<usize>),

    #[error("client {0} is compromised; privacy is only claimed for uncompromised clients")]
    CompromisedClient(usize),

    #[error("client index {index} out of range for {n} clients")]
    ClientOutOfRange { index: usize, n: usize },

    #[error("operation requires {expected} mode")]
    WrongMode { expected: &'static str },
}
