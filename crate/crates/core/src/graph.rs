//! Directed dynamic graph with a one-round view of the previous timestamp.
//!
//! The current adjacency is stored as sorted in/out lists. Between
//! [`DynamicGraph::apply_delta`] and [`DynamicGraph::commit`] the graph keeps
//! the net edge changes of the round, which is enough to answer
//! [`DynamicGraph::neighbors_prev`] without a second copy of the adjacency.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeOp {
    Insert,
    Delete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeDelta {
    pub op: EdgeOp,
    pub src: NodeId,
    pub dst: NodeId,
}

impl EdgeDelta {
    pub fn insert(src: NodeId, dst: NodeId) -> Self {
        Self { op: EdgeOp::Insert, src, dst }
    }

    pub fn delete(src: NodeId, dst: NodeId) -> Self {
        Self { op: EdgeOp::Delete, src, dst }
    }

    pub fn inverse(self) -> Self {
        let op = match self.op {
            EdgeOp::Insert => EdgeOp::Delete,
            EdgeOp::Delete => EdgeOp::Insert,
        };
        Self { op, ..self }
    }
}

impl fmt::Display for EdgeDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            EdgeOp::Insert => '+',
            EdgeOp::Delete => '-',
        };
        write!(f, "{} {} {}", op, self.src, self.dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

/// How undirected input is turned into directed edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectionMode {
    #[default]
    Directed,
    /// Every edge `u v` also yields `v u`.
    Symmetrized,
}

#[derive(Clone, Debug, Default)]
pub struct DynamicGraph {
    out_adj: Vec<Vec<NodeId>>,
    in_adj: Vec<Vec<NodeId>>,
    num_edges: usize,
    pending: Vec<EdgeDelta>,
    /// Net change per edge this round, keyed `(src, dst)` and `(dst, src)`.
    net_out: BTreeMap<(NodeId, NodeId), EdgeOp>,
    net_in: BTreeMap<(NodeId, NodeId), EdgeOp>,
    round_open: bool,
}

impl DynamicGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            out_adj: vec![Vec::new(); num_nodes],
            in_adj: vec![Vec::new(); num_nodes],
            ..Default::default()
        }
    }

    /// Builds a committed graph. Duplicates are an error in directed mode and
    /// silently merged in symmetrized mode.
    pub fn from_edges(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        mode: DirectionMode,
    ) -> Result<Self> {
        let mut g = Self::new(num_nodes);
        for (s, d) in edges {
            match mode {
                DirectionMode::Directed => g.insert_edge(s, d)?,
                DirectionMode::Symmetrized => {
                    g.check_node(s)?;
                    g.check_node(d)?;
                    if !g.has_edge(s, d) {
                        g.insert_edge(s, d)?;
                    }
                    if !g.has_edge(d, s) {
                        g.insert_edge(d, s)?;
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.out_adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.out_adj
            .get(src)
            .is_some_and(|l| l.binary_search(&dst).is_ok())
    }

    /// All current edges in `(src, dst)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(s, l)| l.iter().map(move |&d| (s, d)))
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node >= self.num_nodes() {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes(),
            });
        }
        Ok(())
    }

    fn insert_edge(&mut self, src: NodeId, dst: NodeId) -> Result<()> {
        self.check_node(src)?;
        self.check_node(dst)?;
        let out = &mut self.out_adj[src];
        match out.binary_search(&dst) {
            Ok(_) => return Err(Error::DuplicateEdge { src, dst }),
            Err(pos) => out.insert(pos, dst),
        }
        let inn = &mut self.in_adj[dst];
        let pos = inn.binary_search(&src).unwrap_err();
        inn.insert(pos, src);
        self.num_edges += 1;
        Ok(())
    }

    fn delete_edge(&mut self, src: NodeId, dst: NodeId) -> Result<()> {
        self.check_node(src)?;
        self.check_node(dst)?;
        let out = &mut self.out_adj[src];
        match out.binary_search(&dst) {
            Ok(pos) => {
                out.remove(pos);
            }
            Err(_) => return Err(Error::MissingEdge { src, dst }),
        }
        let inn = &mut self.in_adj[dst];
        let pos = inn.binary_search(&src).expect("in/out adjacency out of sync");
        inn.remove(pos);
        self.num_edges -= 1;
        Ok(())
    }

    fn apply_one(&mut self, d: EdgeDelta) -> Result<()> {
        match d.op {
            EdgeOp::Insert => self.insert_edge(d.src, d.dst),
            EdgeOp::Delete => self.delete_edge(d.src, d.dst),
        }
    }

    fn record_net(&mut self, d: EdgeDelta) {
        let key = (d.src, d.dst);
        if self.net_out.remove(&key).is_none() {
            self.net_out.insert(key, d.op);
            self.net_in.insert((d.dst, d.src), d.op);
        } else {
            self.net_in.remove(&(d.dst, d.src));
        }
    }

    /// Applies `delta` in order. On error the call is rolled back and the
    /// graph is left as it was before the call.
    pub fn apply_delta(&mut self, delta: &[EdgeDelta]) -> Result<()> {
        for (i, &d) in delta.iter().enumerate() {
            if let Err(e) = self.apply_one(d) {
                for &undo in delta[..i].iter().rev() {
                    self.apply_one(undo.inverse()).expect("rollback of applied delta");
                }
                return Err(e);
            }
        }
        for &d in delta {
            self.record_net(d);
            self.pending.push(d);
        }
        self.round_open = true;
        Ok(())
    }

    /// Edges whose presence differs from the start of the round, sorted by
    /// `(src, dst)`. An edge inserted and deleted within a round is absent.
    pub fn net_delta(&self) -> Vec<EdgeDelta> {
        self.net_out
            .iter()
            .map(|(&(src, dst), &op)| EdgeDelta { op, src, dst })
            .collect()
    }

    /// Deltas applied since the last commit, in application order.
    pub fn pending_delta(&self) -> &[EdgeDelta] {
        &self.pending
    }

    pub fn round_open(&self) -> bool {
        self.round_open
    }

    pub fn neighbors(&self, u: NodeId, dir: Direction) -> Result<&[NodeId]> {
        self.check_node(u)?;
        Ok(match dir {
            Direction::Out => &self.out_adj[u],
            Direction::In => &self.in_adj[u],
        })
    }

    pub fn in_neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.in_adj[u]
    }

    pub fn out_neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.out_adj[u]
    }

    /// Neighbors at the previous timestamp: the current list with this
    /// round's net insertions removed and net deletions restored.
    pub fn neighbors_prev(&self, u: NodeId, dir: Direction) -> Result<Cow<'_, [NodeId]>> {
        if !self.round_open {
            return Err(Error::StaleDelta);
        }
        let current = self.neighbors(u, dir)?;
        let net = match dir {
            Direction::Out => &self.net_out,
            Direction::In => &self.net_in,
        };
        let mut changes = net.range((u, 0)..=(u, NodeId::MAX)).peekable();
        if changes.peek().is_none() {
            return Ok(Cow::Borrowed(current));
        }
        let mut prev = current.to_vec();
        for (&(_, v), &op) in changes {
            match op {
                EdgeOp::Insert => {
                    let pos = prev.binary_search(&v).expect("net insert present");
                    prev.remove(pos);
                }
                EdgeOp::Delete => {
                    let pos = prev.binary_search(&v).unwrap_err();
                    prev.insert(pos, v);
                }
            }
        }
        Ok(Cow::Owned(prev))
    }

    /// In-degree at the previous timestamp. Requires an open round.
    pub fn in_degree_prev(&self, u: NodeId) -> Result<usize> {
        if !self.round_open {
            return Err(Error::StaleDelta);
        }
        let mut deg = self.neighbors(u, Direction::In)?.len() as isize;
        for (_, &op) in self.net_in.range((u, 0)..=(u, NodeId::MAX)) {
            deg += match op {
                EdgeOp::Insert => -1,
                EdgeOp::Delete => 1,
            };
        }
        Ok(deg as usize)
    }

    /// Ends the round: the current state becomes the new baseline.
    pub fn commit(&mut self) {
        self.pending.clear();
        self.net_out.clear();
        self.net_in.clear();
        self.round_open = false;
    }

    /// Restores the graph to its state at the start of the round.
    pub fn rollback(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        for &d in pending.iter().rev() {
            self.apply_one(d.inverse()).expect("rollback of pending delta");
        }
        self.commit();
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (u, v) in self.edges() {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }
}

fn parse_node(tok: Option<&str>, line: usize) -> Result<NodeId> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        message: "missing node id".into(),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad node id `{tok}`"),
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses `src dst` lines. Blank lines and `#` comments are ignored.
pub fn parse_edge_list(text: &str) -> Result<Vec<(NodeId, NodeId)>> {
    content_lines(text)
        .map(|(n, line)| {
            let mut it = line.split_whitespace();
            let e = (parse_node(it.next(), n)?, parse_node(it.next(), n)?);
            if it.next().is_some() {
                return Err(Error::Parse {
                    line: n,
                    message: "trailing tokens".into(),
                });
            }
            Ok(e)
        })
        .collect()
}

/// Parses `+ src dst` / `- src dst` lines. In symmetrized mode each line
/// expands to both directions (once for a self loop).
pub fn parse_update_stream(text: &str, mode: DirectionMode) -> Result<Vec<EdgeDelta>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let mut it = line.split_whitespace();
        let op = match it.next() {
            Some("+") => EdgeOp::Insert,
            Some("-") => EdgeOp::Delete,
            other => {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected `+` or `-`, found {other:?}"),
                })
            }
        };
        let src = parse_node(it.next(), n)?;
        let dst = parse_node(it.next(), n)?;
        out.push(EdgeDelta { op, src, dst });
        if mode == DirectionMode::Symmetrized && src != dst {
            out.push(EdgeDelta { op, src: dst, dst: src });
        }
    }
    Ok(out)
}

pub fn format_update_stream(deltas: &[EdgeDelta]) -> String {
    deltas.iter().map(|d| format!("{d}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Toy graph in the spirit of the insertion example: A..E = 0..4.
    fn toy() -> DynamicGraph {
        DynamicGraph::from_edges(
            5,
            [(0, 1), (1, 2), (2, 4), (3, 2), (0, 3)],
            DirectionMode::Directed,
        )
        .unwrap()
    }

    fn consistent(g: &DynamicGraph) -> bool {
        (0..g.num_nodes()).all(|u| {
            g.out_neighbors(u).iter().all(|&v| g.in_neighbors(v).contains(&u))
                && g.in_neighbors(u).iter().all(|&v| g.out_neighbors(v).contains(&u))
        })
    }

    #[test]
    fn empty_delta_keeps_graph() {
        let mut g = toy();
        let before = g.to_edge_list();
        g.apply_delta(&[]).unwrap();
        assert_eq!(g.to_edge_list(), before);
        for u in 0..5 {
            assert_eq!(
                g.neighbors_prev(u, Direction::Out).unwrap().as_ref(),
                g.neighbors(u, Direction::Out).unwrap()
            );
        }
    }

    #[test]
    fn insert_d_to_e() {
        let mut g = toy();
        g.apply_delta(&[EdgeDelta::insert(3, 4)]).unwrap();
        assert_eq!(g.neighbors(4, Direction::In).unwrap(), &[2, 3]);
        assert!(g.neighbors(3, Direction::Out).unwrap().contains(&4));
        assert!(!g.neighbors_prev(3, Direction::Out).unwrap().contains(&4));
        assert_eq!(g.neighbors_prev(4, Direction::In).unwrap().as_ref(), &[2]);
        assert_eq!(g.in_degree_prev(4).unwrap(), 1);
    }

    #[test]
    fn delete_restored_in_prev_view() {
        let mut g = toy();
        g.apply_delta(&[EdgeDelta::delete(0, 1)]).unwrap();
        assert!(!g.neighbors(0, Direction::Out).unwrap().contains(&1));
        assert!(g.neighbors_prev(0, Direction::Out).unwrap().contains(&1));
        assert_eq!(g.in_degree_prev(1).unwrap(), 1);
    }

    #[test]
    fn insert_then_delete_is_net_empty() {
        let mut g = toy();
        let before = g.to_edge_list();
        g.apply_delta(&[EdgeDelta::insert(4, 0), EdgeDelta::delete(4, 0)]).unwrap();
        assert_eq!(g.to_edge_list(), before);
        assert!(g.net_delta().is_empty());
        assert_eq!(g.pending_delta().len(), 2);
    }

    #[test]
    fn errors() {
        let mut g = toy();
        assert!(matches!(
            g.apply_delta(&[EdgeDelta::insert(0, 1)]),
            Err(Error::DuplicateEdge { src: 0, dst: 1 })
        ));
        assert!(matches!(
            g.apply_delta(&[EdgeDelta::delete(4, 0)]),
            Err(Error::MissingEdge { .. })
        ));
        assert!(matches!(
            g.neighbors(9, Direction::Out),
            Err(Error::NodeOutOfRange { .. })
        ));
        assert!(matches!(g.neighbors_prev(0, Direction::Out), Err(Error::StaleDelta)));
        g.apply_delta(&[EdgeDelta::insert(4, 0)]).unwrap();
        g.commit();
        assert!(matches!(g.neighbors_prev(0, Direction::Out), Err(Error::StaleDelta)));
    }

    #[test]
    fn failed_apply_rolls_back() {
        let mut g = toy();
        let before = g.to_edge_list();
        let r = g.apply_delta(&[EdgeDelta::insert(4, 0), EdgeDelta::insert(0, 1)]);
        assert!(r.is_err());
        assert_eq!(g.to_edge_list(), before);
        assert!(!g.round_open());
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let g = DynamicGraph::new(3);
        assert!(g.neighbors(1, Direction::In).unwrap().is_empty());
    }

    #[test]
    fn symmetrized_loading() {
        let g = DynamicGraph::from_edges(3, [(0, 1), (1, 0), (1, 2)], DirectionMode::Symmetrized)
            .unwrap();
        assert_eq!(g.num_edges(), 4);
        assert!(DynamicGraph::from_edges(3, [(0, 1), (0, 1)], DirectionMode::Directed).is_err());
        let s = parse_update_stream("+ 0 2\n- 1 1\n", DirectionMode::Symmetrized).unwrap();
        assert_eq!(
            s,
            vec![EdgeDelta::insert(0, 2), EdgeDelta::insert(2, 0), EdgeDelta::delete(1, 1)]
        );
    }

    #[test]
    fn parsing() {
        let edges = parse_edge_list("# header\n0 1\n\n2 3 # trailing comment\n").unwrap();
        assert_eq!(edges, vec![(0, 1), (2, 3)]);
        assert!(parse_edge_list("0\n").is_err());
        assert!(parse_edge_list("0 1 2\n").is_err());
        assert!(parse_update_stream("* 0 1\n", DirectionMode::Directed).is_err());
        let d = vec![EdgeDelta::insert(1, 2), EdgeDelta::delete(3, 0)];
        assert_eq!(
            parse_update_stream(&format_update_stream(&d), DirectionMode::Directed).unwrap(),
            d
        );
    }

    fn ops() -> impl Strategy<Value = Vec<(bool, usize, usize)>> {
        prop::collection::vec((any::<bool>(), 0usize..6, 0usize..6), 0..40)
    }

    /// Turns arbitrary requests into a valid delta sequence against `g`.
    fn legalize(g: &DynamicGraph, reqs: &[(bool, usize, usize)]) -> Vec<EdgeDelta> {
        let mut sim = g.clone();
        let mut out = Vec::new();
        for &(ins, s, d) in reqs {
            let e = if sim.has_edge(s, d) && !ins {
                EdgeDelta::delete(s, d)
            } else if !sim.has_edge(s, d) && ins {
                EdgeDelta::insert(s, d)
            } else {
                continue;
            };
            sim.apply_delta(&[e]).unwrap();
            out.push(e);
        }
        out
    }

    proptest! {
        #[test]
        fn prev_view_and_rebuild(base in ops(), reqs in ops()) {
            let mut g = DynamicGraph::new(6);
            let base = legalize(&g, &base);
            g.apply_delta(&base).unwrap();
            g.commit();
            let snapshot = g.clone();

            let delta = legalize(&g, &reqs);
            g.apply_delta(&delta).unwrap();
            prop_assert!(consistent(&g));

            // Previous view equals the snapshot taken before the round.
            for u in 0..6 {
                for dir in [Direction::Out, Direction::In] {
                    let prev = g.neighbors_prev(u, dir).unwrap();
                    prop_assert_eq!(prev.as_ref(), snapshot.neighbors(u, dir).unwrap());
                }
                prop_assert_eq!(g.in_degree_prev(u).unwrap(), snapshot.in_neighbors(u).len());
            }

            // Current view equals a graph rebuilt from the written edge list.
            let rebuilt = DynamicGraph::from_edges(
                6,
                parse_edge_list(&g.to_edge_list()).unwrap(),
                DirectionMode::Directed,
            ).unwrap();
            for u in 0..6 {
                prop_assert_eq!(rebuilt.out_neighbors(u), g.out_neighbors(u));
                prop_assert_eq!(rebuilt.in_neighbors(u), g.in_neighbors(u));
            }

            // Applying the net delta to the snapshot reproduces the graph.
            let mut replay = snapshot.clone();
            replay.apply_delta(&g.net_delta()).unwrap();
            prop_assert_eq!(replay.to_edge_list(), g.to_edge_list());

            g.rollback();
            prop_assert_eq!(g.to_edge_list(), snapshot.to_edge_list());
        }
    }
}
