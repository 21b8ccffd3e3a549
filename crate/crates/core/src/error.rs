use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn shape((r, c): &(usize, usize)) -> String {
    format!("{r}x{c}")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must have positive dimensions, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },

    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("{op}: dimension mismatch between {} and {}", shape(.left), shape(.right))]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("beta-divergence ({branch} branch) undefined at p={p}, q={q}")]
    Domain { branch: &'static str, p: f64, q: f64 },

    #[error("component {index} has zero norm and cannot be normalized")]
    DeadComponent { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical abort at iteration {iteration}: {what}")]
    NumericalAbort { iteration: usize, what: String },

    #[error("run beta={beta}, matrix {matrix}, init {init}: {source}")]
    Ensemble {
        beta: f64,
        matrix: usize,
        init: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: line {line}, column {col}: {msg}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalAbort { .. } => true,
            Error::Ensemble { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
