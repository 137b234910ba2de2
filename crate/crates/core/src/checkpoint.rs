//! Per-layer checkpoints of messages and aggregated neighborhoods.
//!
//! For a model with `k` layers the store keeps `k + 1` message matrices
//! (`messages[l]` feeds layer `l`'s aggregation, `messages[k]` is the output
//! embedding) and `k` aggregate matrices. During an update round values are
//! overwritten in place; the first write to a row logs its pre-image, so the
//! previous-timestamp view stays available until [`CheckpointStore::commit_round`].
//!
//! Every counted read goes through [`CheckpointStore::read_prev`] or
//! [`CheckpointStore::read_current`].

use std::cell::Cell;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, NodeId};
use crate::model::Model;
use crate::tensor::{reduce_into, Aggregator, Matrix, Vector};
use crate::tensor_file;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    /// Input of a layer's aggregation (`m`).
    Message,
    /// Output of a layer's aggregation (`alpha`).
    Aggregated,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FetchCounts {
    pub checkpoint: u64,
    pub feature: u64,
}

impl FetchCounts {
    pub fn total(&self) -> u64 {
        self.checkpoint + self.feature
    }
}

impl std::ops::Sub for FetchCounts {
    type Output = FetchCounts;

    fn sub(self, rhs: Self) -> Self {
        FetchCounts {
            checkpoint: self.checkpoint - rhs.checkpoint,
            feature: self.feature - rhs.feature,
        }
    }
}

/// Aggregate of `rows`, or the zero vector of length `len` when empty.
pub(crate) fn aggregate_or_zero<'a>(
    agg: Aggregator,
    len: usize,
    rows: impl IntoIterator<Item = &'a [f32]>,
) -> Vector {
    let mut rows = rows.into_iter();
    match rows.next() {
        None => Vector::zeros(len),
        Some(first) => {
            let mut acc = first.to_vec();
            for r in rows {
                reduce_into(agg, &mut acc, r);
            }
            Vector::from_trusted(acc)
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckpointStore {
    messages: Vec<Matrix>,
    aggregates: Vec<Matrix>,
    undo: HashMap<(Stage, usize, NodeId), Box<[f32]>>,
    dirty: Vec<BTreeSet<NodeId>>,
    /// Reads of layer-0 messages count as feature fetches when those
    /// messages are the raw input features.
    features_at_layer0: bool,
    checkpoint_reads: Cell<u64>,
    feature_reads: Cell<u64>,
}

impl PartialEq for CheckpointStore {
    /// Bitwise comparison of stored values only.
    fn eq(&self, other: &Self) -> bool {
        self.first_difference(other).is_none()
            && self.messages.len() == other.messages.len()
    }
}

impl CheckpointStore {
    pub fn from_parts(
        messages: Vec<Matrix>,
        aggregates: Vec<Matrix>,
        features_at_layer0: bool,
    ) -> Result<Self> {
        if messages.len() != aggregates.len() + 1 {
            return Err(Error::DimensionMismatch {
                context: "checkpoint layer count",
                expected: aggregates.len() + 1,
                found: messages.len(),
            });
        }
        let n = messages[0].rows();
        for (l, a) in aggregates.iter().enumerate() {
            if a.cols() != messages[l].cols() {
                return Err(Error::DimensionMismatch {
                    context: "checkpoint aggregate width",
                    expected: messages[l].cols(),
                    found: a.cols(),
                });
            }
        }
        for m in messages.iter().chain(&aggregates) {
            if m.rows() != n {
                return Err(Error::DimensionMismatch {
                    context: "checkpoint node count",
                    expected: n,
                    found: m.rows(),
                });
            }
        }
        Ok(Self {
            dirty: vec![BTreeSet::new(); aggregates.len()],
            messages,
            aggregates,
            undo: HashMap::new(),
            features_at_layer0,
            checkpoint_reads: Cell::new(0),
            feature_reads: Cell::new(0),
        })
    }

    /// Runs a full forward pass over `g` and keeps every intermediate.
    /// Nodes without in-neighbors aggregate to the zero vector.
    pub fn init_full_inference(g: &DynamicGraph, features: &Matrix, model: &Model) -> Result<Self> {
        let n = g.num_nodes();
        if features.rows() != n {
            return Err(Error::DimensionMismatch {
                context: "feature rows",
                expected: n,
                found: features.rows(),
            });
        }
        let k = model.num_layers();
        let agg = model.aggregator();
        let mut m0 = Matrix::zeros(n, model.message_len(0));
        for v in 0..n {
            m0.set_row(v, &model.run_prefix(features.row(v))?);
        }
        let mut messages = vec![m0];
        let mut aggregates = Vec::with_capacity(k);
        for l in 0..k {
            let len = model.message_len(l);
            let cur = &messages[l];
            let mut alpha = Matrix::zeros(n, len);
            let mut next = Matrix::zeros(n, model.message_len(l + 1));
            for v in 0..n {
                let a = aggregate_or_zero(agg, len, g.in_neighbors(v).iter().map(|&u| cur.row(u)));
                next.set_row(v, &model.run_combination(l, &a, v, cur.row(v))?);
                alpha.set_row(v, &a);
            }
            aggregates.push(alpha);
            messages.push(next);
        }
        Self::from_parts(messages, aggregates, model.messages_are_features())
    }

    pub fn num_layers(&self) -> usize {
        self.aggregates.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.messages[0].rows()
    }

    pub fn messages(&self, layer: usize) -> &Matrix {
        &self.messages[layer]
    }

    pub fn aggregates(&self, layer: usize) -> &Matrix {
        &self.aggregates[layer]
    }

    /// Final-layer embeddings.
    pub fn output(&self) -> &Matrix {
        self.messages.last().unwrap()
    }

    fn matrix(&self, stage: Stage, layer: usize) -> &Matrix {
        match stage {
            Stage::Message => &self.messages[layer],
            Stage::Aggregated => &self.aggregates[layer],
        }
    }

    fn count(&self, stage: Stage, layer: usize) {
        let c = if stage == Stage::Message && layer == 0 && self.features_at_layer0 {
            &self.feature_reads
        } else {
            &self.checkpoint_reads
        };
        c.set(c.get() + 1);
    }

    /// Uncounted access to the current value.
    pub fn peek(&self, stage: Stage, layer: usize, node: NodeId) -> &[f32] {
        self.matrix(stage, layer).row(node)
    }

    /// Previous-timestamp value (pre-image if the row was written this round).
    pub fn read_prev(&self, stage: Stage, layer: usize, node: NodeId) -> &[f32] {
        self.count(stage, layer);
        match self.undo.get(&(stage, layer, node)) {
            Some(pre) => pre,
            None => self.matrix(stage, layer).row(node),
        }
    }

    pub fn read_current(&self, stage: Stage, layer: usize, node: NodeId) -> &[f32] {
        self.count(stage, layer);
        self.matrix(stage, layer).row(node)
    }

    pub fn write_current(&mut self, stage: Stage, layer: usize, node: NodeId, v: &[f32]) -> Result<()> {
        let width = self.matrix(stage, layer).cols();
        if v.len() != width {
            return Err(Error::DimensionMismatch {
                context: "checkpoint write",
                expected: width,
                found: v.len(),
            });
        }
        let m = match stage {
            Stage::Message => &mut self.messages[layer],
            Stage::Aggregated => &mut self.aggregates[layer],
        };
        self.undo
            .entry((stage, layer, node))
            .or_insert_with(|| m.row(node).into());
        m.set_row(node, v);
        let dirty_layer = match stage {
            Stage::Message => layer.saturating_sub(1),
            Stage::Aggregated => layer,
        };
        self.dirty[dirty_layer].insert(node);
        Ok(())
    }

    /// Nodes written while processing `layer` this round (its aggregate or
    /// the message it produces).
    pub fn dirty(&self, layer: usize) -> &BTreeSet<NodeId> {
        &self.dirty[layer]
    }

    pub fn commit_round(&mut self) {
        self.undo.clear();
        self.dirty.iter_mut().for_each(BTreeSet::clear);
    }

    /// Restores every row written this round.
    pub fn rollback_round(&mut self) {
        for ((stage, layer, node), pre) in self.undo.drain() {
            match stage {
                Stage::Message => self.messages[layer].set_row(node, &pre),
                Stage::Aggregated => self.aggregates[layer].set_row(node, &pre),
            }
        }
        self.dirty.iter_mut().for_each(BTreeSet::clear);
    }

    pub fn fetches(&self) -> FetchCounts {
        FetchCounts {
            checkpoint: self.checkpoint_reads.get(),
            feature: self.feature_reads.get(),
        }
    }

    /// First `(stage, layer, node, index)` where the stored bits differ.
    pub fn first_difference(&self, other: &Self) -> Option<(Stage, usize, NodeId, usize)> {
        let stages = [Stage::Message, Stage::Aggregated];
        for l in 0..self.messages.len().min(other.messages.len()) {
            for stage in stages {
                if stage == Stage::Aggregated && l >= self.num_layers().min(other.num_layers()) {
                    continue;
                }
                if let Some((node, idx)) = first_matrix_difference(self.matrix(stage, l), other.matrix(stage, l)) {
                    return Some((stage, l, node, idx));
                }
            }
        }
        None
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = format!("features_at_layer0 {}\n", self.features_at_layer0);
        for (l, m) in self.messages.iter().enumerate() {
            let file = format!("message_{l}.tnsr");
            tensor_file::write_matrix(dir.join(&file), m)?;
            writeln!(manifest, "message {l} {file}").unwrap();
        }
        for (l, a) in self.aggregates.iter().enumerate() {
            let file = format!("aggregate_{l}.tnsr");
            tensor_file::write_matrix(dir.join(&file), a)?;
            writeln!(manifest, "aggregate {l} {file}").unwrap();
        }
        fs::write(dir.join(MANIFEST), manifest)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let mut features_at_layer0 = false;
        let mut messages: Vec<Option<Matrix>> = Vec::new();
        let mut aggregates: Vec<Option<Matrix>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let bad = || Error::Parse {
                line: idx + 1,
                message: format!("bad checkpoint manifest line `{line}`"),
            };
            match line.split_whitespace().collect::<Vec<_>>()[..] {
                [] => {}
                ["features_at_layer0", flag] => {
                    features_at_layer0 = flag.parse().map_err(|_| bad())?;
                }
                [kind @ ("message" | "aggregate"), layer, file] => {
                    let layer: usize = layer.parse().map_err(|_| bad())?;
                    let slot = if kind == "message" { &mut messages } else { &mut aggregates };
                    if slot.len() <= layer {
                        slot.resize(layer + 1, None);
                    }
                    slot[layer] = Some(tensor_file::read_matrix(dir.join(file))?);
                }
                _ => return Err(bad()),
            }
        }
        let collect = |v: Vec<Option<Matrix>>, what: &str| -> Result<Vec<Matrix>> {
            v.into_iter()
                .enumerate()
                .map(|(l, m)| m.ok_or_else(|| Error::Format(format!("missing {what} layer {l}"))))
                .collect()
        };
        Self::from_parts(
            collect(messages, "message")?,
            collect(aggregates, "aggregate")?,
            features_at_layer0,
        )
    }
}

pub const MANIFEST: &str = "checkpoint.txt";

fn first_matrix_difference(a: &Matrix, b: &Matrix) -> Option<(NodeId, usize)> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Some((0, 0));
    }
    let cols = a.cols().max(1);
    a.data()
        .iter()
        .zip(b.data())
        .position(|(x, y)| x.to_bits() != y.to_bits())
        .map(|p| (p / cols, p % cols))
}
