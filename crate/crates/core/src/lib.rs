//! Incremental inference for min/max graph neural networks on graphs whose
//! edges change over time.
//!
//! [`engine::Engine`] keeps the messages and aggregated neighborhoods of every
//! layer from a full inference pass and, for each batch of edge updates,
//! rewrites only the entries the batch can change. The results match a fresh
//! full inference bit for bit.

pub mod baseline;
pub mod checkpoint;
pub mod engine;
pub mod error;
pub mod graph;
pub mod model;
pub mod stats;
pub mod synth;
pub mod tensor;
pub mod tensor_file;

pub use checkpoint::{CheckpointStore, FetchCounts, Stage};
pub use engine::{Engine, EngineOptions};
pub use error::{Error, Result};
pub use graph::{DirectionMode, DynamicGraph, EdgeDelta, EdgeOp, NodeId};
pub use model::{BuiltinConfig, BuiltinKind, Model, ModelSpec};
pub use stats::{Report, RoundStats};
pub use tensor::{Aggregator, Matrix, Vector};
