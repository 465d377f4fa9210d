use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate point set: {0}")]
    DegeneratePointSet(String),

    #[error("degenerate edge between vertices {i} and {j}")]
    DegenerateEdge { i: usize, j: usize },

    #[error("degenerate triangle {0:?}")]
    DegenerateTriangle([usize; 3]),

    #[error("uncovered pixel ({u1}, {u2})")]
    UncoveredPixel { u1: f64, u2: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("divergence: non-finite value at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("empty problem: {0}")]
    EmptyProblem(String),

    #[error("zero operator: nothing to estimate a norm from")]
    ZeroOperator,

    #[error("singular normal equations: vertex {vertex} has no supporting pixels")]
    SingularSystem { vertex: usize },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("oracle scale exceeded: {free} free variables (at most 3 supported)")]
    OracleScaleExceeded { free: usize },

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no valid ground-truth pixels")]
    NoValidTruth,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: malformed file: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    /// True for failures caused by files, formats or arguments rather than the numerics.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } | Error::InvalidConfig(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
