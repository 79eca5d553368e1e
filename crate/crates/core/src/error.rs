use std::path::PathBuf;

use thiserror::Error;

use crate::chem::SmilesError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Row-level problem found while loading a CSV input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header: {message}")]
    Header { path: PathBuf, message: String },

    #[error("{path}: {} bad row(s): {}", .rows.len(), join_rows(.rows))]
    Rows {
        path: PathBuf,
        rows: Vec<RowDiagnostic>,
    },

    #[error(transparent)]
    Smiles(#[from] SmilesError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing ids in embedding table '{tag}': {}", .ids.join(", "))]
    MissingIds { tag: String, ids: Vec<String> },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fold guard: {0}")]
    Leakage(String),
}

fn join_rows(rows: &[RowDiagnostic]) -> String {
    rows.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for input/config problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Header { .. }
            | Error::Rows { .. }
            | Error::Smiles(_)
            | Error::InvalidArgument(_)
            | Error::MissingIds { .. }
            | Error::Checkpoint(_)
            | Error::Config(_) => 1,
            Error::Dimension(_) | Error::Numerical(_) | Error::Fold { .. } | Error::Leakage(_) => 2,
        }
    }
}
