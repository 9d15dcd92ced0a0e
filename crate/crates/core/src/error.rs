use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no documents")]
    NoDocuments,

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),

    #[error("document {0:?} is empty after tokenization")]
    EmptyDocument(String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("split {0} has no documents")]
    EmptySplit(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corpus has zero co-occurrence windows")]
    NoWindows,

    #[error("graph/statistics mismatch: {0}")]
    GraphMismatch(String),

    #[error("node {0} has zero degree and cannot be normalized")]
    IsolatedNode(usize),

    #[error("unsupported graph file version {0:?}")]
    VersionMismatch(String),

    #[error("graph file checksum mismatch (expected {expected}, found {found})")]
    ChecksumMismatch { expected: String, found: String },

    #[error("graph file is truncated: {0}")]
    Truncated(String),

    #[error("unknown edge type tag {tag:?} at line {line}")]
    UnknownEdgeType { tag: String, line: usize },

    #[error("graph file format error at line {line}: {msg}")]
    GraphFormat { line: usize, msg: String },

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid operand for {op}: {msg}")]
    Operand { op: &'static str, msg: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("backward already ran on this tape")]
    BackwardTwice,

    #[error("loss mask selects no rows")]
    EmptyMask,

    #[error("non-finite gradient for parameter {0:?}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numeric pipeline (overflow, divergence),
    /// as opposed to bad input data or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NonFiniteGradient(_)
                | Error::Diverged { .. }
                | Error::Shape { .. }
                | Error::Operand { .. }
                | Error::BackwardTwice
        )
    }
}
