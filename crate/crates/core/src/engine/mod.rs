//! Incremental update rounds over the checkpoint store.
//!
//! A round applies an edge delta to the graph and walks the layers in order.
//! Each layer owns an event queue: edge events for the round's changed edges
//! are seeded at the start of the layer, joined by the events propagated from
//! nodes whose message changed in the previous layer. Events are grouped per
//! target, classified, and resolved either in place or by recomputing the
//! target's aggregate from its current in-neighbors. A target whose aggregate
//! and self message are unchanged stops there.

pub mod condition;
pub mod event;

use std::collections::BTreeMap;

use crate::checkpoint::{aggregate_or_zero, CheckpointStore, Stage};
use crate::error::{Error, Result};
use crate::graph::{Direction, DynamicGraph, EdgeDelta, EdgeOp, NodeId};
use crate::model::Model;
use crate::stats::{LayerStats, RoundStats};
use crate::tensor::{bit_eq, Aggregator, Matrix, Vector};

pub use condition::{classify, incremental_update, ConditionKind, ConditionReport};
pub use event::{
    group_and_reduce, group_user_events, Event, EventOp, EventQueue, GroupedEvents, MessageList,
    UserEvent,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Seed every edge event twice. Used to test duplicate tolerance.
    pub duplicate_edge_events: bool,
}

/// Appends one event per changed edge to the queue of `layer`: deletions
/// carry the source's previous message, insertions its current one.
/// Returns the number of events pushed.
pub fn seed_edge_events(
    queue: &mut EventQueue,
    net_delta: &[EdgeDelta],
    store: &CheckpointStore,
    layer: usize,
    duplicate: bool,
) -> usize {
    let copies = if duplicate { 2 } else { 1 };
    for d in net_delta {
        let (op, msg) = match d.op {
            EdgeOp::Delete => (EventOp::Del, store.read_prev(Stage::Message, layer, d.src)),
            EdgeOp::Insert => (EventOp::Add, store.read_current(Stage::Message, layer, d.src)),
        };
        let idx = queue.push_message(msg);
        for _ in 0..copies {
            queue.push_event(op, d.dst, idx);
        }
    }
    net_delta.len() * copies
}

/// Aggregates the current messages of `node`'s current in-neighbors, or the
/// zero vector when it has none. One counted fetch per neighbor.
pub fn recompute(
    store: &CheckpointStore,
    g: &DynamicGraph,
    layer: usize,
    node: NodeId,
    agg: Aggregator,
) -> Vector {
    let len = store.messages(layer).cols();
    aggregate_or_zero(
        agg,
        len,
        g.in_neighbors(node)
            .iter()
            .map(|&u| store.read_current(Stage::Message, layer, u)),
    )
}

/// Pushes the replacement of `node`'s message into the next layer's queue:
/// `Del` of the old message along previous out-edges, `Add` of the new one
/// along current out-edges, plus whatever the next layer's user functions
/// emit.
fn propagate_change(
    next: &mut EventQueue,
    g: &DynamicGraph,
    model: &Model,
    next_layer: usize,
    node: NodeId,
    old: &[f32],
    new: &[f32],
) -> Result<()> {
    let old_idx = next.push_message(old);
    let new_idx = next.push_message(new);
    for &u in g.neighbors_prev(node, Direction::Out)?.iter() {
        next.push_event(EventOp::Del, u, old_idx);
    }
    for &u in g.out_neighbors(node) {
        next.push_event(EventOp::Add, u, new_idx);
    }
    for (hook, f) in model.layer_hooks(next_layer)?.into_iter().enumerate() {
        f.propagate(node, new, &mut |target, payload| {
            next.push_user_event(hook, target, payload)
        });
    }
    Ok(())
}

pub struct Engine {
    graph: DynamicGraph,
    store: CheckpointStore,
    model: Model,
    options: EngineOptions,
    rounds: u64,
}

impl Engine {
    /// Runs full inference on `graph` to build the initial checkpoints.
    pub fn new(graph: DynamicGraph, features: &Matrix, model: Model) -> Result<Self> {
        let store = CheckpointStore::init_full_inference(&graph, features, &model)?;
        Self::from_parts(graph, store, model)
    }

    /// Resumes from existing checkpoints, which must match `graph` and `model`.
    pub fn from_parts(graph: DynamicGraph, store: CheckpointStore, model: Model) -> Result<Self> {
        if graph.round_open() {
            return Err(Error::StaleDelta);
        }
        if store.num_nodes() != graph.num_nodes() {
            return Err(Error::DimensionMismatch {
                context: "checkpoint node count",
                expected: graph.num_nodes(),
                found: store.num_nodes(),
            });
        }
        if store.num_layers() != model.num_layers() {
            return Err(Error::DimensionMismatch {
                context: "checkpoint layer count",
                expected: model.num_layers(),
                found: store.num_layers(),
            });
        }
        for l in 0..=model.num_layers() {
            if store.messages(l).cols() != model.message_len(l) {
                return Err(Error::DimensionMismatch {
                    context: "checkpoint message width",
                    expected: model.message_len(l),
                    found: store.messages(l).cols(),
                });
            }
        }
        Ok(Self {
            graph,
            store,
            model,
            options: EngineOptions::default(),
            rounds: 0,
        })
    }

    pub fn with_options(mut self, options: EngineOptions) -> Self {
        self.options = options;
        self
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }

    pub fn store(&self) -> &CheckpointStore {
        &self.store
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn options(&self) -> EngineOptions {
        self.options
    }

    /// Rounds processed so far.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn into_parts(self) -> (DynamicGraph, CheckpointStore, Model) {
        (self.graph, self.store, self.model)
    }

    /// Applies `delta` and brings every checkpoint up to date. On error both
    /// the graph and the store are restored to their state before the call.
    pub fn process_update_round(&mut self, delta: &[EdgeDelta]) -> Result<RoundStats> {
        self.graph.apply_delta(delta)?;
        let net_edges = self.graph.net_delta().len();
        match self.run_layers() {
            Ok((layers, dirty_sets)) => {
                self.store.commit_round();
                self.graph.commit();
                let stats = RoundStats {
                    round: self.rounds,
                    updates: delta.len(),
                    net_edges,
                    layers,
                    baseline_fetches: None,
                    dirty_sets,
                };
                self.rounds += 1;
                Ok(stats)
            }
            Err(e) => {
                self.store.rollback_round();
                self.graph.rollback();
                Err(e)
            }
        }
    }

    fn run_layers(&mut self) -> Result<(Vec<LayerStats>, Vec<Vec<NodeId>>)> {
        let k = self.model.num_layers();
        let agg = self.model.aggregator();
        let net = self.graph.net_delta();
        let mut queue = EventQueue::new(self.model.message_len(0));
        let mut layers = Vec::with_capacity(k);
        let mut dirty_sets = Vec::with_capacity(k);
        for l in 0..k {
            let before = self.store.fetches();
            let mut st = LayerStats::default();
            seed_edge_events(&mut queue, &net, &self.store, l, self.options.duplicate_edge_events);
            st.events = queue.events.len() as u64;
            st.user_events = queue.user_events.len() as u64;

            let mut targets: BTreeMap<NodeId, Option<GroupedEvents>> = group_and_reduce(&queue, agg)
                .into_iter()
                .map(|g| (g.target, Some(g)))
                .collect();
            let user = group_user_events(&queue);
            for &v in user.keys() {
                targets.entry(v).or_insert(None);
            }
            let hooks = self.model.layer_hooks(l)?;
            let mut next = EventQueue::new(self.model.message_len(l + 1));

            for (v, grp) in targets {
                let alpha_prev = self.store.read_prev(Stage::Aggregated, l, v).to_vec();
                let alpha = match &grp {
                    Some(grp) => {
                        st.targets += 1;
                        // A node without previous in-neighbors stores the zero
                        // vector, which is not the aggregator's identity.
                        let base = if self.graph.in_degree_prev(v)? == 0 {
                            Vector::filled(alpha_prev.len(), agg.identity())
                        } else {
                            Vector::new(alpha_prev.clone())?
                        };
                        let report = classify(&base, grp, agg);
                        st.record(report.kind);
                        if report.kind.allows_incremental() {
                            incremental_update(&base, grp, &report, agg)?
                        } else {
                            st.recomputes += 1;
                            recompute(&self.store, &self.graph, l, v, agg)
                        }
                    }
                    None => {
                        st.self_only += 1;
                        Vector::new(alpha_prev.clone())?
                    }
                };
                let alpha_changed = !bit_eq(&alpha, &alpha_prev);
                let delivered = user.get(&v);
                if !alpha_changed && delivered.is_none() {
                    st.pruned += 1;
                    continue;
                }
                if alpha_changed {
                    self.store.write_current(Stage::Aggregated, l, v, &alpha)?;
                }
                let self_message = if self.model.uses_self_message(l) {
                    let grouped = delivered.and_then(|per_hook| {
                        per_hook
                            .iter()
                            .rev()
                            .find_map(|(&h, payloads)| hooks.get(h).and_then(|f| f.group(v, payloads)))
                    });
                    match grouped {
                        Some(m) => m.into_inner(),
                        None => self.store.read_current(Stage::Message, l, v).to_vec(),
                    }
                } else {
                    Vec::new()
                };
                let new = self.model.run_combination(l, &alpha, v, &self_message)?;
                let old = self.store.read_prev(Stage::Message, l + 1, v).to_vec();
                if bit_eq(&new, &old) {
                    st.unchanged_messages += 1;
                    continue;
                }
                self.store.write_current(Stage::Message, l + 1, v, &new)?;
                if l + 1 < k {
                    propagate_change(&mut next, &self.graph, &self.model, l + 1, v, &old, &new)?;
                }
            }

            st.fetches = self.store.fetches() - before;
            let dirty: Vec<NodeId> = self.store.dirty(l).iter().copied().collect();
            st.dirty = dirty.len() as u64;
            layers.push(st);
            dirty_sets.push(dirty);
            queue = next;
        }
        Ok((layers, dirty_sets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuiltinConfig, BuiltinKind, HookRegistry, ModelSpec, WeightSet};

    fn identity_gcn(layers: usize, len: usize) -> Model {
        let mut text = String::new();
        let mut w = WeightSet::default();
        for l in 0..layers {
            text.push_str(&format!("min\nlin w{l}\n"));
            w.insert_matrix(format!("w{l}"), Matrix::identity(len));
        }
        Model::new(ModelSpec::parse(&text).unwrap(), w, HookRegistry::default(), len).unwrap()
    }

    fn features(rows: &[&[f32]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn empty_delta_does_nothing() {
        let g = DynamicGraph::from_edges(3, [(0, 1), (1, 2)], Default::default()).unwrap();
        let x = features(&[&[1.0], &[2.0], &[3.0]]);
        let mut e = Engine::new(g, &x, identity_gcn(2, 1)).unwrap();
        let before = e.store().clone();
        let st = e.process_update_round(&[]).unwrap();
        assert!(st.layers.iter().all(|l| l.events == 0 && l.dirty == 0));
        assert_eq!(e.store().first_difference(&before), None);
    }

    #[test]
    fn resilient_target_emits_nothing() {
        // Node 2 already sees 1.0 from node 0; adding 1 -> 2 with 5.0 changes nothing.
        let g = DynamicGraph::from_edges(3, [(0, 2)], Default::default()).unwrap();
        let x = features(&[&[1.0], &[5.0], &[9.0]]);
        let mut e = Engine::new(g, &x, identity_gcn(2, 1)).unwrap();
        let st = e.process_update_round(&[EdgeDelta::insert(1, 2)]).unwrap();
        assert_eq!(st.layers[0].targets, 1);
        assert_eq!(st.layers[0].pruned, 1);
        // Only the seeded edge event reaches layer 1.
        assert_eq!(st.layers[1].events, 1);
        assert_eq!(st.layers[0].dirty, 0);
    }

    #[test]
    fn changed_node_fans_out_del_and_add() {
        // 0 -> 1, and 1 -> {2, 3, 4}. Lowering node 1's aggregate changes its
        // message, which must be replaced on all three out-edges.
        let g = DynamicGraph::from_edges(6, [(0, 1), (1, 2), (1, 3), (1, 4)], Default::default())
            .unwrap();
        let x = features(&[&[3.0], &[7.0], &[8.0], &[8.0], &[8.0], &[-1.0]]);
        let mut e = Engine::new(g, &x, identity_gcn(2, 1)).unwrap();
        let st = e.process_update_round(&[EdgeDelta::insert(5, 1)]).unwrap();
        // One seeded edge event plus 3 Del and 3 Add from node 1.
        assert_eq!(st.layers[1].events, 1 + 6);
        let want = CheckpointStore::init_full_inference(e.graph(), &x, e.model()).unwrap();
        assert_eq!(e.store().first_difference(&want), None);
    }

    #[test]
    fn final_layer_emits_no_events() {
        let g = DynamicGraph::from_edges(2, [], Default::default()).unwrap();
        let x = features(&[&[1.0], &[2.0]]);
        let mut e = Engine::new(g, &x, identity_gcn(1, 1)).unwrap();
        let st = e.process_update_round(&[EdgeDelta::insert(0, 1)]).unwrap();
        assert_eq!(st.layers.len(), 1);
        assert_eq!(e.store().output().row(1), &[1.0]);
    }

    #[test]
    fn losing_last_neighbor_gives_zero() {
        let g = DynamicGraph::from_edges(2, [(0, 1)], Default::default()).unwrap();
        let x = features(&[&[4.0], &[2.0]]);
        let mut e = Engine::new(g, &x, identity_gcn(1, 1)).unwrap();
        let st = e.process_update_round(&[EdgeDelta::delete(0, 1)]).unwrap();
        assert_eq!(st.layers[0].count(ConditionKind::ExposedReset), 1);
        assert_eq!(e.store().aggregates(0).row(1), &[0.0]);
    }

    #[test]
    fn failed_round_restores_state() {
        let g = DynamicGraph::from_edges(2, [(0, 1)], Default::default()).unwrap();
        let x = features(&[&[4.0], &[2.0]]);
        let mut e = Engine::new(g, &x, identity_gcn(1, 1)).unwrap();
        let before = e.store().clone();
        assert!(e
            .process_update_round(&[EdgeDelta::delete(0, 1), EdgeDelta::delete(0, 1)])
            .is_err());
        assert!(e.graph().has_edge(0, 1));
        assert_eq!(e.store().first_difference(&before), None);
        assert_eq!(e.rounds(), 0);
    }

    #[test]
    fn builtin_models_stay_exact_on_a_small_stream() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (4, 1)];
        let x = features(&[
            &[0.1, 0.9],
            &[0.5, 0.2],
            &[0.3, 0.3],
            &[0.8, 0.1],
            &[0.6, 0.7],
        ]);
        let stream = [
            EdgeDelta::insert(2, 4),
            EdgeDelta::delete(0, 1),
            EdgeDelta::insert(3, 1),
            EdgeDelta::delete(2, 3),
            EdgeDelta::insert(0, 1),
        ];
        for kind in [BuiltinKind::Gcn, BuiltinKind::Sage, BuiltinKind::Gin] {
            let model = BuiltinConfig::new(kind, 3, 2, 3).model(7).unwrap();
            let g = DynamicGraph::from_edges(5, edges, Default::default()).unwrap();
            let mut e = Engine::new(g, &x, model).unwrap();
            for d in stream {
                e.process_update_round(&[d]).unwrap();
                let want = CheckpointStore::init_full_inference(e.graph(), &x, e.model()).unwrap();
                assert_eq!(e.store().first_difference(&want), None, "{kind:?} after {d}");
            }
        }
    }
}
