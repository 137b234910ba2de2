//! Reference inference: the whole graph, or only the nodes a delta can reach.
//!
//! Both paths count every row they read: a feature row per prefix
//! evaluation, and one message row per in-neighbor (plus the node's own row
//! when the layer uses it) per aggregation.

use std::collections::BTreeSet;

use crate::checkpoint::{aggregate_or_zero, CheckpointStore};
use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, EdgeDelta, NodeId};
use crate::model::Model;
use crate::tensor::Matrix;

/// Every intermediate of a forward pass, laid out like the checkpoint store.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    /// `k + 1` message matrices; the last one is the output.
    pub messages: Vec<Matrix>,
    pub aggregates: Vec<Matrix>,
}

impl Embeddings {
    pub fn output(&self) -> &Matrix {
        self.messages.last().unwrap()
    }

    pub fn from_store(store: &CheckpointStore) -> Self {
        Self {
            messages: (0..=store.num_layers()).map(|l| store.messages(l).clone()).collect(),
            aggregates: (0..store.num_layers()).map(|l| store.aggregates(l).clone()).collect(),
        }
    }

    pub fn into_store(self, model: &Model) -> Result<CheckpointStore> {
        CheckpointStore::from_parts(self.messages, self.aggregates, model.messages_are_features())
    }

    fn zeros(n: usize, model: &Model) -> Self {
        let k = model.num_layers();
        Self {
            messages: (0..=k).map(|l| Matrix::zeros(n, model.message_len(l))).collect(),
            aggregates: (0..k).map(|l| Matrix::zeros(n, model.message_len(l))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub embeddings: Embeddings,
    pub fetches: u64,
}

/// Evaluates `prefix_nodes` through the prefix and layer `l` for every node
/// in `layer_nodes[l]`, on top of `emb`. Each layer's inputs must already be
/// current for the in-neighbors (and self) of that layer's nodes.
fn forward(
    g: &DynamicGraph,
    features: &Matrix,
    model: &Model,
    prefix_nodes: &[NodeId],
    layer_nodes: &[Vec<NodeId>],
    emb: &mut Embeddings,
) -> Result<u64> {
    let agg = model.aggregator();
    let mut fetches = 0;
    for &v in prefix_nodes {
        emb.messages[0].set_row(v, &model.run_prefix(features.row(v))?);
    }
    if !model.messages_are_features() {
        fetches += prefix_nodes.len() as u64;
    }
    for (l, nodes) in layer_nodes.iter().enumerate() {
        let uses_self = model.uses_self_message(l);
        let len = model.message_len(l);
        for &v in nodes {
            let (done, rest) = emb.messages.split_at_mut(l + 1);
            let cur = &done[l];
            let nbrs = g.in_neighbors(v);
            let a = aggregate_or_zero(agg, len, nbrs.iter().map(|&u| cur.row(u)));
            fetches += nbrs.len() as u64 + u64::from(uses_self);
            let self_message = if uses_self { cur.row(v) } else { &[] };
            rest[0].set_row(v, &model.run_combination(l, &a, v, self_message)?);
            emb.aggregates[l].set_row(v, &a);
        }
    }
    Ok(fetches)
}

fn check_features(g: &DynamicGraph, features: &Matrix, model: &Model) -> Result<()> {
    if features.rows() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "feature rows",
            expected: g.num_nodes(),
            found: features.rows(),
        });
    }
    if features.cols() != model.input_len() {
        return Err(Error::DimensionMismatch {
            context: "feature width",
            expected: model.input_len(),
            found: features.cols(),
        });
    }
    Ok(())
}

/// Inference over the whole graph.
pub fn full_inference(g: &DynamicGraph, features: &Matrix, model: &Model) -> Result<Inference> {
    check_features(g, features, model)?;
    let n = g.num_nodes();
    let all: Vec<NodeId> = (0..n).collect();
    let mut embeddings = Embeddings::zeros(n, model);
    let fetches = forward(
        g,
        features,
        model,
        &all,
        &vec![all.clone(); model.num_layers()],
        &mut embeddings,
    )?;
    Ok(Inference {
        embeddings,
        fetches,
    })
}

/// Nodes within `l` hops forward (along current out-edges) of the endpoints
/// of a delta, for `l = 0..=k`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AffectedArea {
    pub hops: Vec<BTreeSet<NodeId>>,
}

impl AffectedArea {
    pub fn compute(g: &DynamicGraph, delta: &[EdgeDelta], k: usize) -> Self {
        let mut seen: BTreeSet<NodeId> = delta.iter().flat_map(|d| [d.src, d.dst]).collect();
        let mut frontier: Vec<NodeId> = seen.iter().copied().collect();
        let mut hops = vec![seen.clone()];
        for _ in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in g.out_neighbors(u) {
                    if seen.insert(v) {
                        next.push(v);
                    }
                }
            }
            hops.push(seen.clone());
            frontier = next;
        }
        Self { hops }
    }

    /// Nodes within `l` hops.
    pub fn within(&self, l: usize) -> &BTreeSet<NodeId> {
        &self.hops[l.min(self.hops.len() - 1)]
    }
}

/// `|area(l)| / |V|` for `l = 1..=k`.
pub fn compute_affected_ratio(g: &DynamicGraph, delta: &[EdgeDelta], k: usize) -> Vec<f64> {
    let area = AffectedArea::compute(g, delta, k);
    let n = g.num_nodes().max(1) as f64;
    (1..=k).map(|l| area.within(l).len() as f64 / n).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffectedInference {
    pub inference: Inference,
    pub area: AffectedArea,
}

/// Recomputes the nodes within `k` hops of `delta` on the post-delta graph
/// `g`, reading their full in-neighborhoods layer by layer. Every other row is
/// copied from `prev`.
pub fn affected_inference(
    g: &DynamicGraph,
    delta: &[EdgeDelta],
    features: &Matrix,
    model: &Model,
    prev: &Embeddings,
) -> Result<AffectedInference> {
    check_features(g, features, model)?;
    let k = model.num_layers();
    let area = AffectedArea::compute(g, delta, k);
    // needed[l] holds the nodes evaluated at layer l; the set one layer down
    // adds their in-neighbors.
    let mut needed: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); k + 1];
    needed[k] = area.within(k).clone();
    for l in (0..k).rev() {
        let mut s = needed[l + 1].clone();
        for &v in &needed[l + 1] {
            s.extend(g.in_neighbors(v));
        }
        needed[l] = s;
    }
    let prefix: Vec<NodeId> = needed[0].iter().copied().collect();
    let layer_nodes: Vec<Vec<NodeId>> = needed[1..].iter().map(|s| s.iter().copied().collect()).collect();
    let mut embeddings = prev.clone();
    let fetches = forward(g, features, model, &prefix, &layer_nodes, &mut embeddings)?;
    Ok(AffectedInference {
        inference: Inference {
            embeddings,
            fetches,
        },
        area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectionMode;
    use crate::model::{BuiltinConfig, BuiltinKind, HookRegistry, ModelSpec, WeightSet};
    use crate::tensor::Vector;

    fn gcn_identity(len: usize) -> Model {
        let mut w = WeightSet::default();
        w.insert_matrix("w", Matrix::identity(len));
        w.insert_vector("b", Vector::new(vec![0.5; len]).unwrap());
        Model::new(
            ModelSpec::parse("min\nlin w bias b\nrelu").unwrap(),
            w,
            HookRegistry::default(),
            len,
        )
        .unwrap()
    }

    #[test]
    fn no_edges_gives_relu_of_bias() {
        let g = DynamicGraph::new(3);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let out = full_inference(&g, &x, &gcn_identity(2)).unwrap();
        for v in 0..3 {
            assert_eq!(out.embeddings.output().row(v), &[0.5, 0.5]);
        }
    }

    #[test]
    fn full_matches_checkpoint_init() {
        let g = DynamicGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 1)], DirectionMode::Directed)
            .unwrap();
        let x = Matrix::from_rows(&[
            vec![0.1, 0.4],
            vec![0.7, 0.2],
            vec![0.3, 0.9],
            vec![0.5, 0.5],
        ])
        .unwrap();
        for kind in [BuiltinKind::Gcn, BuiltinKind::Sage, BuiltinKind::Gin] {
            let model = BuiltinConfig::new(kind, 2, 2, 3).model(3).unwrap();
            let full = full_inference(&g, &x, &model).unwrap();
            let store = CheckpointStore::init_full_inference(&g, &x, &model).unwrap();
            assert_eq!(full.embeddings, Embeddings::from_store(&store));
        }
    }

    #[test]
    fn empty_delta_is_free() {
        let g = DynamicGraph::from_edges(3, [(0, 1)], DirectionMode::Directed).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let m = gcn_identity(1);
        let prev = full_inference(&g, &x, &m).unwrap().embeddings;
        let r = affected_inference(&g, &[], &x, &m, &prev).unwrap();
        assert_eq!(r.inference.fetches, 0);
        assert_eq!(r.inference.embeddings, prev);
        assert_eq!(compute_affected_ratio(&g, &[], 2), vec![0.0, 0.0]);
    }

    #[test]
    fn isolated_component_untouched() {
        // Components {0, 1, 2} and {3, 4}; the delta lives in the second.
        let mut g =
            DynamicGraph::from_edges(5, [(0, 1), (1, 2), (3, 4)], DirectionMode::Directed).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0]]).unwrap();
        let m = gcn_identity(1);
        let prev = full_inference(&g, &x, &m).unwrap().embeddings;
        let delta = [EdgeDelta::insert(4, 3)];
        g.apply_delta(&delta).unwrap();
        let r = affected_inference(&g, &delta, &x, &m, &prev).unwrap();
        assert!(r.area.within(1).iter().all(|&v| v >= 3));
        let full = full_inference(&g, &x, &m).unwrap();
        assert_eq!(r.inference.embeddings, full.embeddings);
        assert!(r.inference.fetches < full.fetches);
    }

    #[test]
    fn star_hub_reaches_everything() {
        // Hub 0 points at 1..=9; inserting 9 -> 0 reaches all nodes in one hop.
        let mut g = DynamicGraph::from_edges(10, (1..10).map(|v| (0, v)), DirectionMode::Directed)
            .unwrap();
        let delta = [EdgeDelta::insert(9, 0)];
        g.apply_delta(&delta).unwrap();
        let ratio = compute_affected_ratio(&g, &delta, 2);
        assert_eq!(ratio, vec![1.0, 1.0]);
        let area = AffectedArea::compute(&g, &delta, 2);
        assert_eq!(area.within(0).len(), 2);
    }
}
