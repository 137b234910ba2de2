//! Seeded synthetic graphs, features, and update streams.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{format_update_stream, EdgeDelta, NodeId};
use crate::tensor::Matrix;
use crate::tensor_file;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub nodes: usize,
    /// Average out-degree of the base graph.
    pub avg_degree: usize,
    pub feature_len: usize,
    pub stream_len: usize,
    /// Probability that a stream entry is an insertion.
    pub insert_fraction: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(nodes: usize, avg_degree: usize, feature_len: usize, stream_len: usize, seed: u64) -> Self {
        Self {
            nodes,
            avg_degree,
            feature_len,
            stream_len,
            insert_fraction: 0.6,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub num_nodes: usize,
    pub edges: Vec<(NodeId, NodeId)>,
    pub features: Matrix,
    pub stream: Vec<EdgeDelta>,
}

/// Live edge set with O(1) uniform sampling.
struct EdgePool {
    list: Vec<(NodeId, NodeId)>,
    index: HashMap<(NodeId, NodeId), usize>,
}

impl EdgePool {
    fn insert(&mut self, e: (NodeId, NodeId)) {
        self.index.insert(e, self.list.len());
        self.list.push(e);
    }

    fn remove_at(&mut self, i: usize) -> (NodeId, NodeId) {
        let e = self.list.swap_remove(i);
        self.index.remove(&e);
        if let Some(&moved) = self.list.get(i) {
            self.index.insert(moved, i);
        }
        e
    }
}

fn random_absent_edge(rng: &mut ChaCha8Rng, n: usize, present: &impl Fn(&(NodeId, NodeId)) -> bool) -> (NodeId, NodeId) {
    loop {
        let s = rng.gen_range(0..n);
        let d = rng.gen_range(0..n);
        if s != d && !present(&(s, d)) {
            return (s, d);
        }
    }
}

/// Generates a simple directed graph with `nodes * avg_degree` edges and no
/// self loops, features uniform in `[0, 1)`, and a mixed stream whose
/// deletions always hit a live edge.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let n = cfg.nodes;
    if n < 2 {
        return Err(Error::EmptyInput("synthetic graph needs at least 2 nodes"));
    }
    let capacity = n * (n - 1);
    let m = n * cfg.avg_degree;
    if m >= capacity {
        return Err(Error::Format(format!(
            "average degree {} is too dense for {n} nodes",
            cfg.avg_degree
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edge_set = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let e = random_absent_edge(&mut rng, n, &|e| edge_set.contains(e));
        edge_set.insert(e);
        edges.push(e);
    }
    let features = Matrix::new(
        n,
        cfg.feature_len,
        (0..n * cfg.feature_len).map(|_| rng.gen::<f32>()).collect(),
    )?;

    let mut pool = EdgePool {
        list: Vec::new(),
        index: HashMap::new(),
    };
    for &e in &edges {
        pool.insert(e);
    }
    let mut stream = Vec::with_capacity(cfg.stream_len);
    for _ in 0..cfg.stream_len {
        let insert = pool.list.is_empty()
            || (pool.list.len() < capacity && rng.gen_bool(cfg.insert_fraction));
        if insert {
            let (s, d) = random_absent_edge(&mut rng, n, &|e| pool.index.contains_key(e));
            pool.insert((s, d));
            stream.push(EdgeDelta::insert(s, d));
        } else {
            let i = rng.gen_range(0..pool.list.len());
            let (s, d) = pool.remove_at(i);
            stream.push(EdgeDelta::delete(s, d));
        }
    }
    Ok(SyntheticData {
        num_nodes: n,
        edges,
        features,
        stream,
    })
}

pub const GRAPH_FILE: &str = "graph.txt";
pub const FEATURES_FILE: &str = "features.tnsr";
pub const STREAM_FILE: &str = "stream.txt";

impl SyntheticData {
    pub fn edge_list(&self) -> String {
        self.edges.iter().map(|(s, d)| format!("{s} {d}\n")).collect()
    }

    /// Writes `graph.txt`, `features.tnsr` and `stream.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(GRAPH_FILE), self.edge_list())?;
        tensor_file::write_matrix(dir.join(FEATURES_FILE), &self.features)?;
        fs::write(dir.join(STREAM_FILE), format_update_stream(&self.stream))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DirectionMode, DynamicGraph};

    #[test]
    fn sizes_and_ranges() {
        let d = generate(&SyntheticConfig::new(50, 4, 3, 100, 1)).unwrap();
        assert_eq!(d.edges.len(), 200);
        assert!(d.edges.iter().all(|(s, t)| s != t));
        assert_eq!(d.features.rows(), 50);
        assert!(d.features.data().iter().all(|&x| (0.0..1.0).contains(&x)));
        assert_eq!(d.stream.len(), 100);
    }

    #[test]
    fn stream_replays_cleanly() {
        let d = generate(&SyntheticConfig::new(30, 3, 2, 500, 9)).unwrap();
        let mut g = DynamicGraph::from_edges(30, d.edges.clone(), DirectionMode::Directed).unwrap();
        for &e in &d.stream {
            g.apply_delta(&[e]).unwrap();
            g.commit();
        }
    }

    #[test]
    fn seeded() {
        let cfg = SyntheticConfig::new(20, 2, 2, 10, 5);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SyntheticConfig { seed: 6, ..cfg };
        assert_ne!(generate(&other).unwrap().edges, generate(&SyntheticConfig::new(20, 2, 2, 10, 5)).unwrap().edges);
    }

    #[test]
    fn too_dense_is_rejected() {
        assert!(generate(&SyntheticConfig::new(3, 2, 1, 0, 0)).is_err());
        assert!(generate(&SyntheticConfig::new(1, 0, 1, 0, 0)).is_err());
    }
}
