//! Test oracles written straight from the layer equations, sharing no code
//! with the inference paths in the library beyond the weight containers.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeSet;

use streamgnn_core::graph::{DynamicGraph, EdgeDelta, NodeId};
use streamgnn_core::model::{BuiltinConfig, BuiltinKind, WeightSet};
use streamgnn_core::tensor::{Aggregator, Matrix};
use streamgnn_core::CheckpointStore;

/// Per layer, per node rows.
pub type Rows = Vec<Vec<f32>>;

pub struct Forward {
    pub messages: Vec<Rows>,
    pub aggregates: Vec<Rows>,
}

fn wins(agg: Aggregator, candidate: f32, current: f32) -> bool {
    let ord = candidate.total_cmp(&current);
    match agg {
        Aggregator::Min => ord == Ordering::Less,
        Aggregator::Max => ord == Ordering::Greater,
    }
}

/// Elementwise min/max over `rows`; zeros when there are none.
pub fn naive_reduce(agg: Aggregator, len: usize, rows: &[&[f32]]) -> Vec<f32> {
    if rows.is_empty() {
        return vec![0.0; len];
    }
    (0..len)
        .map(|i| {
            let mut best = rows[0][i];
            for r in &rows[1..] {
                if wins(agg, r[i], best) {
                    best = r[i];
                }
            }
            best
        })
        .collect()
}

fn affine(w: &Matrix, x: &[f32], b: Option<&[f32]>) -> Vec<f32> {
    (0..w.rows())
        .map(|r| {
            let mut acc = 0.0f32;
            for (c, xc) in x.iter().enumerate() {
                acc += w.data()[r * w.cols() + c] * xc;
            }
            b.map_or(acc, |b| acc + b[r])
        })
        .collect()
}

fn relu(x: Vec<f32>) -> Vec<f32> {
    x.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Forward pass of a built-in model over `in_nbrs`.
pub fn naive_forward(
    cfg: &BuiltinConfig,
    w: &WeightSet,
    in_nbrs: &[Vec<NodeId>],
    features: &Matrix,
) -> Forward {
    let n = in_nbrs.len();
    let agg = cfg.aggregator;
    let m = |name: String| w.matrix(&name).unwrap();
    let v = |name: String| w.vector(&name).unwrap().as_slice();
    let mut h: Rows = (0..n).map(|u| features.row(u).to_vec()).collect();
    if cfg.kind == BuiltinKind::Gcn {
        h = h.iter().map(|x| affine(m("gcn.in".into()), x, None)).collect();
    }
    let mut messages = vec![h.clone()];
    let mut aggregates = Vec::new();
    for l in 0..cfg.layers {
        let len = h[0].len();
        let alpha: Rows = (0..n)
            .map(|u| {
                let rows: Vec<&[f32]> = in_nbrs[u].iter().map(|&s| h[s].as_slice()).collect();
                naive_reduce(agg, len, &rows)
            })
            .collect();
        let next: Rows = (0..n)
            .map(|u| match cfg.kind {
                BuiltinKind::Gcn => relu(affine(
                    m(format!("gcn.w{l}")),
                    &alpha[u],
                    Some(v(format!("gcn.b{l}"))),
                )),
                BuiltinKind::Sage => {
                    let a = affine(m(format!("sage.w1_{l}")), &alpha[u], None);
                    let s = affine(m(format!("sage.w2_{l}")), &h[u], None);
                    relu(a.iter().zip(&s).map(|(x, y)| x + y).collect())
                }
                BuiltinKind::Gin => {
                    let scale = 1.0 + w.epsilon(l).unwrap();
                    let z: Vec<f32> = h[u].iter().zip(&alpha[u]).map(|(x, a)| scale * x + a).collect();
                    let z = relu(affine(
                        m(format!("gin.mlp{l}_0")),
                        &z,
                        Some(v(format!("gin.mlp{l}_0b"))),
                    ));
                    relu(affine(
                        m(format!("gin.mlp{l}_1")),
                        &z,
                        Some(v(format!("gin.mlp{l}_1b"))),
                    ))
                }
            })
            .collect();
        aggregates.push(alpha);
        messages.push(next.clone());
        h = next;
    }
    Forward {
        messages,
        aggregates,
    }
}

pub fn in_lists(g: &DynamicGraph) -> Vec<Vec<NodeId>> {
    (0..g.num_nodes()).map(|u| g.in_neighbors(u).to_vec()).collect()
}

fn rows_equal(m: &Matrix, rows: &Rows) -> Option<(NodeId, usize)> {
    for (u, r) in rows.iter().enumerate() {
        for (i, x) in r.iter().enumerate() {
            if m.row(u)[i].to_bits() != x.to_bits() {
                return Some((u, i));
            }
        }
    }
    None
}

/// First mismatch between the store and the oracle, as a readable string.
pub fn store_mismatch(store: &CheckpointStore, want: &Forward) -> Option<String> {
    for (l, rows) in want.messages.iter().enumerate() {
        if let Some((u, i)) = rows_equal(store.messages(l), rows) {
            return Some(format!("message layer {l} node {u} index {i}"));
        }
    }
    for (l, rows) in want.aggregates.iter().enumerate() {
        if let Some((u, i)) = rows_equal(store.aggregates(l), rows) {
            return Some(format!("aggregate layer {l} node {u} index {i}"));
        }
    }
    None
}

/// Nodes within `hops` forward steps of the endpoints of `delta`.
pub fn bfs_within(g: &DynamicGraph, delta: &[EdgeDelta], hops: usize) -> BTreeSet<NodeId> {
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut frontier: Vec<NodeId> = Vec::new();
    for d in delta {
        for x in [d.src, d.dst] {
            if seen.insert(x) {
                frontier.push(x);
            }
        }
    }
    let mut out = vec![Vec::new(); g.num_nodes()];
    for (s, t) in g.edges() {
        out[s].push(t);
    }
    for _ in 0..hops {
        let mut next = Vec::new();
        for u in frontier {
            for &t in &out[u] {
                if seen.insert(t) {
                    next.push(t);
                }
            }
        }
        frontier = next;
    }
    seen
}

/// The three configurations used throughout the acceptance runs.
pub fn standard_configs(input_len: usize) -> Vec<(&'static str, BuiltinConfig)> {
    vec![
        ("gcn-min", BuiltinConfig::new(BuiltinKind::Gcn, 2, input_len, 16)),
        ("sage-min", BuiltinConfig::new(BuiltinKind::Sage, 2, input_len, 16)),
        (
            "gin-max",
            BuiltinConfig::new(BuiltinKind::Gin, 5, input_len, 8).with_epsilon(0.1),
        ),
    ]
}
