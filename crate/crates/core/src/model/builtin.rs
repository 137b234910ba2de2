//! Descriptions and seeded random weights for GCN, GraphSAGE and GIN.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{HookRegistry, Model, ModelSpec, WeightSet};
use crate::tensor::{Aggregator, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinKind {
    Gcn,
    Sage,
    Gin,
}

impl FromStr for BuiltinKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Self::Gcn),
            "sage" | "graphsage" => Ok(Self::Sage),
            "gin" => Ok(Self::Gin),
            _ => Err(Error::UnsupportedModel(format!("unknown built-in model `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuiltinConfig {
    pub kind: BuiltinKind,
    pub layers: usize,
    pub input_len: usize,
    pub hidden: usize,
    pub aggregator: Aggregator,
    /// GIN only.
    pub epsilon: f32,
}

impl BuiltinConfig {
    /// GCN and SAGE default to min, GIN to max with `epsilon = 0.1`.
    pub fn new(kind: BuiltinKind, layers: usize, input_len: usize, hidden: usize) -> Self {
        let aggregator = match kind {
            BuiltinKind::Gin => Aggregator::Max,
            _ => Aggregator::Min,
        };
        Self {
            kind,
            layers,
            input_len,
            hidden,
            aggregator,
            epsilon: 0.1,
        }
    }

    pub fn with_aggregator(mut self, aggregator: Aggregator) -> Self {
        self.aggregator = aggregator;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f32) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn description(&self) -> String {
        let agg = self.aggregator.keyword();
        let mut s = String::new();
        match self.kind {
            BuiltinKind::Gcn => {
                s.push_str("lin gcn.in\n");
                for l in 0..self.layers {
                    writeln!(s, "{agg}\nlin gcn.w{l} bias gcn.b{l}\nrelu").unwrap();
                }
            }
            BuiltinKind::Sage => {
                for l in 0..self.layers {
                    writeln!(s, "{agg}\nlin sage.w1_{l}\nuser_apply sage_self\nrelu").unwrap();
                }
            }
            BuiltinKind::Gin => {
                for l in 0..self.layers {
                    writeln!(
                        s,
                        "{agg}\nuser_apply gin_self\n\
                         lin gin.mlp{l}_0 bias gin.mlp{l}_0b\nrelu\n\
                         lin gin.mlp{l}_1 bias gin.mlp{l}_1b\nrelu"
                    )
                    .unwrap();
                }
            }
        }
        s
    }

    pub fn random_weights(&self, seed: u64) -> WeightSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = WeightSet::default();
        let h = self.hidden;
        let mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let scale = 1.0 / (cols.max(1) as f32).sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
            Matrix::new(rows, cols, data).unwrap()
        };
        let vec = |rng: &mut ChaCha8Rng, len: usize| {
            Vector::new((0..len).map(|_| rng.gen_range(-0.1..0.1)).collect()).unwrap()
        };
        match self.kind {
            BuiltinKind::Gcn => {
                w.insert_matrix("gcn.in", mat(&mut rng, h, self.input_len));
                for l in 0..self.layers {
                    w.insert_matrix(format!("gcn.w{l}"), mat(&mut rng, h, h));
                    w.insert_vector(format!("gcn.b{l}"), vec(&mut rng, h));
                }
            }
            BuiltinKind::Sage => {
                for l in 0..self.layers {
                    let fan_in = if l == 0 { self.input_len } else { h };
                    w.insert_matrix(format!("sage.w1_{l}"), mat(&mut rng, h, fan_in));
                    w.insert_matrix(format!("sage.w2_{l}"), mat(&mut rng, h, fan_in));
                }
            }
            BuiltinKind::Gin => {
                for l in 0..self.layers {
                    let fan_in = if l == 0 { self.input_len } else { h };
                    w.insert_matrix(format!("gin.mlp{l}_0"), mat(&mut rng, h, fan_in));
                    w.insert_vector(format!("gin.mlp{l}_0b"), vec(&mut rng, h));
                    w.insert_matrix(format!("gin.mlp{l}_1"), mat(&mut rng, h, h));
                    w.insert_vector(format!("gin.mlp{l}_1b"), vec(&mut rng, h));
                    w.set_epsilon(l, self.epsilon).unwrap();
                }
            }
        }
        w
    }

    pub fn model(&self, seed: u64) -> Result<Model> {
        Model::new(
            ModelSpec::parse(&self.description())?,
            self.random_weights(seed),
            HookRegistry::builtin(),
            self.input_len,
        )
    }
}
