//! Model descriptions and the bound, validated model used for inference.
//!
//! A description is line-oriented, one operation per line:
//!
//! ```text
//! lin <weight> [bias <vector>]
//! min | max
//! relu
//! user_apply <hook>
//! ```
//!
//! The op list is split into one partition per aggregation. Partition `l`
//! runs from its aggregation line up to (not including) the next one; ops
//! in front of the first aggregation belong to partition 0 and transform the
//! input features into the first layer's messages.

pub mod builtin;
pub mod hooks;
pub mod weights;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::tensor::{matvec_affine, relu, Aggregator, Vector};

pub use hooks::{ApplyContext, GinSelf, HookRegistry, SageSelf, UserFunctions};
pub use builtin::{BuiltinConfig, BuiltinKind};
pub use weights::WeightSet;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelOp {
    Aggregate(Aggregator),
    Linear { weight: String, bias: Option<String> },
    Relu,
    UserApply(String),
}

impl fmt::Display for ModelOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelOp::Aggregate(a) => f.write_str(a.keyword()),
            ModelOp::Linear { weight, bias: None } => write!(f, "lin {weight}"),
            ModelOp::Linear {
                weight,
                bias: Some(b),
            } => write!(f, "lin {weight} bias {b}"),
            ModelOp::Relu => f.write_str("relu"),
            ModelOp::UserApply(h) => write!(f, "user_apply {h}"),
        }
    }
}

// Operations that need more than a node's own message and aggregate.
const UNSUPPORTED: &[&str] = &[
    "batch_norm",
    "batchnorm",
    "graph_norm",
    "layer_norm",
    "norm",
    "normalize",
    "softmax",
    "attention",
    "gat",
    "mean",
    "sum",
    "concat",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    ops: Vec<ModelOp>,
    /// Index of each aggregation op, one per layer.
    aggregations: Vec<usize>,
    aggregator: Aggregator,
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let arity = |n: usize| -> Result<()> {
                if toks.len() != n {
                    return Err(Error::Parse {
                        line,
                        message: format!("`{}` takes {} argument(s)", toks[0], n - 1),
                    });
                }
                Ok(())
            };
            let op = match toks[0] {
                "min" => {
                    arity(1)?;
                    ModelOp::Aggregate(Aggregator::Min)
                }
                "max" => {
                    arity(1)?;
                    ModelOp::Aggregate(Aggregator::Max)
                }
                "relu" => {
                    arity(1)?;
                    ModelOp::Relu
                }
                "user_apply" => {
                    arity(2)?;
                    ModelOp::UserApply(toks[1].to_string())
                }
                "lin" => match toks[..] {
                    [_, w] => ModelOp::Linear {
                        weight: w.to_string(),
                        bias: None,
                    },
                    [_, w, "bias", b] => ModelOp::Linear {
                        weight: w.to_string(),
                        bias: Some(b.to_string()),
                    },
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: "expected `lin <weight> [bias <vector>]`".into(),
                        })
                    }
                },
                kw if UNSUPPORTED.contains(&kw.to_ascii_lowercase().as_str()) => {
                    return Err(Error::UnsupportedModel(format!(
                        "line {line}: `{kw}` depends on more than a node's own message and \
                         aggregated neighborhood"
                    )))
                }
                kw => {
                    return Err(Error::UnknownKeyword {
                        line,
                        keyword: kw.to_string(),
                    })
                }
            };
            ops.push(op);
        }
        Self::from_ops(ops)
    }

    pub fn from_ops(ops: Vec<ModelOp>) -> Result<Self> {
        let aggregations: Vec<usize> = ops
            .iter()
            .enumerate()
            .filter(|(_, op)| matches!(op, ModelOp::Aggregate(_)))
            .map(|(i, _)| i)
            .collect();
        let first = *aggregations.first().ok_or(Error::NoAggregation)?;
        let aggregator = match ops[first] {
            ModelOp::Aggregate(a) => a,
            _ => unreachable!(),
        };
        if aggregations
            .iter()
            .any(|&i| ops[i] != ModelOp::Aggregate(aggregator))
        {
            return Err(Error::MixedAggregators);
        }
        if ops[..first].iter().any(|op| matches!(op, ModelOp::UserApply(_))) {
            return Err(Error::UnsupportedModel(
                "user_apply before the first aggregation has no node context".into(),
            ));
        }
        Ok(Self {
            ops,
            aggregations,
            aggregator,
        })
    }

    pub fn ops(&self) -> &[ModelOp] {
        &self.ops
    }

    pub fn num_layers(&self) -> usize {
        self.aggregations.len()
    }

    pub fn aggregator(&self) -> Aggregator {
        self.aggregator
    }

    /// Op index ranges, one per layer, covering every op exactly once.
    pub fn partitions(&self) -> Vec<Range<usize>> {
        (0..self.num_layers())
            .map(|l| {
                let start = if l == 0 { 0 } else { self.aggregations[l] };
                let end = self
                    .aggregations
                    .get(l + 1)
                    .copied()
                    .unwrap_or(self.ops.len());
                start..end
            })
            .collect()
    }

    /// Ops applied to input features before the first aggregation.
    pub fn prefix_ops(&self) -> &[ModelOp] {
        &self.ops[..self.aggregations[0]]
    }

    /// Ops following layer `l`'s aggregation, up to the next aggregation.
    pub fn combination_ops(&self, layer: usize) -> &[ModelOp] {
        let start = self.aggregations[layer] + 1;
        let end = self
            .aggregations
            .get(layer + 1)
            .copied()
            .unwrap_or(self.ops.len());
        &self.ops[start..end]
    }

    /// Hook names referenced by layer `l`'s combination, in first-use order.
    pub fn hooks_in_layer(&self, layer: usize) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.combination_ops(layer)
            .iter()
            .filter_map(|op| match op {
                ModelOp::UserApply(h) if seen.insert(h.as_str()) => Some(h.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn hooks(&self) -> BTreeSet<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                ModelOp::UserApply(h) => Some(h.as_str()),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

/// A description bound to weights and user functions, with all dimensions
/// checked.
#[derive(Clone)]
pub struct Model {
    spec: ModelSpec,
    weights: WeightSet,
    hooks: HookRegistry,
    input_len: usize,
    /// `message_lens[l]` is the input length of layer `l`'s aggregation; the
    /// final entry is the output embedding length.
    message_lens: Vec<usize>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("layers", &self.num_layers())
            .field("aggregator", &self.aggregator())
            .field("message_lens", &self.message_lens)
            .finish()
    }
}

impl Model {
    pub fn new(
        spec: ModelSpec,
        weights: WeightSet,
        hooks: HookRegistry,
        input_len: usize,
    ) -> Result<Self> {
        let mut message_lens = Vec::with_capacity(spec.num_layers() + 1);
        let mut len = input_len;
        for op in spec.prefix_ops() {
            len = Self::op_output_len(op, len, None, &weights, &hooks)?;
        }
        message_lens.push(len);
        for l in 0..spec.num_layers() {
            let self_len = len;
            for op in spec.combination_ops(l) {
                len = Self::op_output_len(op, len, Some((l, self_len)), &weights, &hooks)?;
            }
            message_lens.push(len);
        }
        Ok(Self {
            spec,
            weights,
            hooks,
            input_len,
            message_lens,
        })
    }

    fn op_output_len(
        op: &ModelOp,
        len: usize,
        layer_ctx: Option<(usize, usize)>,
        weights: &WeightSet,
        hooks: &HookRegistry,
    ) -> Result<usize> {
        match op {
            ModelOp::Aggregate(_) | ModelOp::Relu => Ok(len),
            ModelOp::Linear { weight, bias } => {
                let w = weights.matrix(weight)?;
                if w.cols() != len {
                    return Err(Error::DimensionMismatch {
                        context: "linear weight columns",
                        expected: len,
                        found: w.cols(),
                    });
                }
                if let Some(b) = bias {
                    let b = weights.vector(b)?;
                    if b.len() != w.rows() {
                        return Err(Error::DimensionMismatch {
                            context: "linear bias",
                            expected: w.rows(),
                            found: b.len(),
                        });
                    }
                }
                Ok(w.rows())
            }
            ModelOp::UserApply(name) => {
                let (layer, self_len) = layer_ctx.ok_or_else(|| {
                    Error::UnsupportedModel("user_apply outside a layer".into())
                })?;
                hooks.get(name)?.output_len(layer, len, self_len, weights)
            }
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    pub fn hooks(&self) -> &HookRegistry {
        &self.hooks
    }

    pub fn num_layers(&self) -> usize {
        self.spec.num_layers()
    }

    pub fn aggregator(&self) -> Aggregator {
        self.spec.aggregator()
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn message_len(&self, layer: usize) -> usize {
        self.message_lens[layer]
    }

    pub fn output_len(&self) -> usize {
        *self.message_lens.last().unwrap()
    }

    /// True when the first layer's messages are the raw input features.
    pub fn messages_are_features(&self) -> bool {
        self.spec.prefix_ops().is_empty()
    }

    /// Whether layer `l`'s combination reads the node's own message.
    pub fn uses_self_message(&self, layer: usize) -> bool {
        self.spec
            .hooks_in_layer(layer)
            .iter()
            .any(|h| self.hooks.get(h).is_ok_and(|f| f.needs_self_message()))
    }

    pub fn uses_any_self_message(&self) -> bool {
        (0..self.num_layers()).any(|l| self.uses_self_message(l))
    }

    /// User functions bound in layer `l`, in first-use order.
    pub fn layer_hooks(&self, layer: usize) -> Result<Vec<&dyn UserFunctions>> {
        self.spec
            .hooks_in_layer(layer)
            .into_iter()
            .map(|h| self.hooks.get(h))
            .collect()
    }

    /// First-layer message for a node with input features `x`.
    pub fn run_prefix(&self, x: &[f32]) -> Result<Vector> {
        if x.len() != self.input_len {
            return Err(Error::DimensionMismatch {
                context: "input features",
                expected: self.input_len,
                found: x.len(),
            });
        }
        let mut h = Vector::new(x.to_vec())?;
        for op in self.spec.prefix_ops() {
            h = self.apply_op(op, h, None)?;
        }
        Ok(h)
    }

    /// Runs layer `l`'s combination on aggregate `a`, producing the node's
    /// message for layer `l + 1` (its output embedding for the last layer).
    pub fn run_combination(
        &self,
        layer: usize,
        a: &[f32],
        node: NodeId,
        self_message: &[f32],
    ) -> Result<Vector> {
        if a.len() != self.message_lens[layer] {
            return Err(Error::DimensionMismatch {
                context: "aggregate",
                expected: self.message_lens[layer],
                found: a.len(),
            });
        }
        let ctx = ApplyContext {
            layer,
            node,
            self_message,
            weights: &self.weights,
        };
        let mut h = Vector::from_trusted(a.to_vec());
        for op in self.spec.combination_ops(layer) {
            h = self.apply_op(op, h, Some(&ctx))?;
        }
        Ok(h)
    }

    fn apply_op(&self, op: &ModelOp, h: Vector, ctx: Option<&ApplyContext<'_>>) -> Result<Vector> {
        match op {
            ModelOp::Aggregate(_) => Ok(h),
            ModelOp::Relu => Ok(relu(&h)),
            ModelOp::Linear { weight, bias } => {
                let w = self.weights.matrix(weight)?;
                let b = bias
                    .as_deref()
                    .map(|b| self.weights.vector(b))
                    .transpose()?;
                matvec_affine(w, &h, b.map(|v| v.as_slice()))
            }
            ModelOp::UserApply(name) => {
                let ctx = ctx.ok_or_else(|| {
                    Error::UnsupportedModel("user_apply outside a layer".into())
                })?;
                self.hooks.get(name)?.apply(h, ctx)
            }
        }
    }
}
