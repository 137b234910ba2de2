use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("NaN value in {0}")]
    NaN(String),

    #[error("edge {src} -> {dst} already exists")]
    DuplicateEdge { src: NodeId, dst: NodeId },

    #[error("edge {src} -> {dst} does not exist")]
    MissingEdge { src: NodeId, dst: NodeId },

    #[error("node {node} out of range (graph has {num_nodes} nodes)")]
    NodeOutOfRange { node: NodeId, num_nodes: usize },

    #[error("previous-timestamp view requested with no open update round")]
    StaleDelta,

    #[error("line {line}: unknown keyword `{keyword}`")]
    UnknownKeyword { line: usize, keyword: String },

    #[error("model description contains no min/max aggregation")]
    NoAggregation,

    #[error("model description mixes min and max aggregation")]
    MixedAggregators,

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing weight `{0}`")]
    MissingWeight(String),

    #[error("no user function bound to `{0}`")]
    MissingHook(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
