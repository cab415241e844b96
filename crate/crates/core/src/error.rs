use thiserror::Error;

/// Errors raised by the graph, inference and bound evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("duplicate edge ({var}, {chk})")]
    DuplicateEdge { var: usize, chk: usize },
    #[error("node {0} is not a code-bit node for this code kind")]
    WrongNodeKind(usize),
    #[error("invalid degree distribution: {0}")]
    InvalidDegreeDistribution(String),
    #[error("ensemble sampling failed: {0}")]
    Sampling(String),
    #[error("depth {0} must be even")]
    OddDepth(usize),
    #[error("computational tree exceeds node cap {cap}")]
    TreeTooLarge { cap: usize },
    #[error("enumeration exceeded cap {cap}")]
    EnumerationCap { cap: usize },
    #[error("{free} free spins exceed brute-force cap {cap}")]
    BruteForceCap { free: usize, cap: usize },
    #[error("llr vector has length {got}, expected {expected}")]
    LlrLength { got: usize, expected: usize },
    #[error("non-finite log-likelihood at position {0}")]
    NonFiniteLlr(usize),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("quadrature did not converge (error estimate {estimate:e})")]
    Quadrature { estimate: f64 },
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("dual partition function too close to zero ({0:e}); resolve via primal")]
    NearZeroDualPartition(f64),
    #[error("wrong code kind: {0}")]
    WrongCodeKind(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
