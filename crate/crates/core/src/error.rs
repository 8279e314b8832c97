use std::path::PathBuf;

use crate::system_model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible selection: {0:?} constraint violated")]
    Infeasible(Violation),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("enumeration refused: {count} feasible selections exceed the cap of {cap}")]
    EnumerationCap { count: u128, cap: usize },

    #[error("empty group in aggregation: {0}")]
    EmptyGroup(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
