//! User-defined functions attached to `user_apply` lines.
//!
//! A user function takes part in three places of an update round:
//! `propagate` emits custom events when a node's message changes,
//! `group` folds the custom events that reached a node, and `apply` runs
//! inside the combination. Custom events live in their own list, separate
//! from the native add/delete events.
//!
//! The built-in functions carry a node's own updated message to itself in
//! the next layer, which is what GraphSAGE and GIN need for their self term.
//! When a node received no such event its message is unchanged, and the
//! engine hands `apply` the checkpointed value instead.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::model::WeightSet;
use crate::tensor::{matvec_affine, Vector};

pub struct ApplyContext<'a> {
    pub layer: usize,
    pub node: NodeId,
    /// The node's own message entering this layer.
    pub self_message: &'a [f32],
    pub weights: &'a WeightSet,
}

pub trait UserFunctions: Send + Sync {
    /// Called when `node`'s message for the next layer changed to `message`.
    fn propagate(&self, node: NodeId, message: &[f32], emit: &mut dyn FnMut(NodeId, &[f32])) {
        let _ = (node, message, emit);
    }

    /// Folds the payloads of custom events addressed to `node`. A returned
    /// vector replaces the node's checkpointed self message for this layer.
    fn group(&self, node: NodeId, payloads: &[&[f32]]) -> Option<Vector> {
        let _ = (node, payloads);
        None
    }

    fn apply(&self, x: Vector, ctx: &ApplyContext<'_>) -> Result<Vector>;

    /// Output length for input length `input_len` in `layer`, given the
    /// node's self-message length. Used for model validation.
    fn output_len(
        &self,
        layer: usize,
        input_len: usize,
        self_len: usize,
        weights: &WeightSet,
    ) -> Result<usize>;

    fn needs_self_message(&self) -> bool {
        true
    }
}

#[derive(Clone, Default)]
pub struct HookRegistry {
    hooks: BTreeMap<String, Arc<dyn UserFunctions>>,
}

impl fmt::Debug for HookRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.hooks.keys()).finish()
    }
}

impl HookRegistry {
    /// Registry with `sage_self` and `gin_self` bound.
    pub fn builtin() -> Self {
        let mut r = Self::default();
        r.register("sage_self", SageSelf::new("sage.w2_"));
        r.register("gin_self", GinSelf);
        r
    }

    pub fn register(&mut self, name: impl Into<String>, f: impl UserFunctions + 'static) {
        self.hooks.insert(name.into(), Arc::new(f));
    }

    pub fn get(&self, name: &str) -> Result<&dyn UserFunctions> {
        self.hooks
            .get(name)
            .map(|h| h.as_ref())
            .ok_or_else(|| Error::MissingHook(name.to_string()))
    }
}

fn send_to_self(node: NodeId, message: &[f32], emit: &mut dyn FnMut(NodeId, &[f32])) {
    emit(node, message);
}

fn last_payload(payloads: &[&[f32]]) -> Option<Vector> {
    payloads.last().map(|p| Vector::from_trusted(p.to_vec()))
}

/// `x + W2 · h_self`, with `W2` read from `<prefix><layer>`.
pub struct SageSelf {
    weight_prefix: String,
}

impl SageSelf {
    pub fn new(weight_prefix: impl Into<String>) -> Self {
        Self {
            weight_prefix: weight_prefix.into(),
        }
    }

    fn weight_name(&self, layer: usize) -> String {
        format!("{}{}", self.weight_prefix, layer)
    }
}

impl UserFunctions for SageSelf {
    fn propagate(&self, node: NodeId, message: &[f32], emit: &mut dyn FnMut(NodeId, &[f32])) {
        send_to_self(node, message, emit)
    }

    fn group(&self, _node: NodeId, payloads: &[&[f32]]) -> Option<Vector> {
        last_payload(payloads)
    }

    fn apply(&self, x: Vector, ctx: &ApplyContext<'_>) -> Result<Vector> {
        let w2 = ctx.weights.matrix(&self.weight_name(ctx.layer))?;
        let rhs = matvec_affine(w2, ctx.self_message, None)?;
        if rhs.len() != x.len() {
            return Err(Error::DimensionMismatch {
                context: "sage_self",
                expected: x.len(),
                found: rhs.len(),
            });
        }
        Ok(Vector::from_trusted(
            x.iter().zip(rhs.iter()).map(|(a, b)| a + b).collect(),
        ))
    }

    fn output_len(
        &self,
        layer: usize,
        input_len: usize,
        self_len: usize,
        weights: &WeightSet,
    ) -> Result<usize> {
        let w2 = weights.matrix(&self.weight_name(layer))?;
        if w2.cols() != self_len || w2.rows() != input_len {
            return Err(Error::DimensionMismatch {
                context: "sage_self weight",
                expected: input_len * self_len,
                found: w2.rows() * w2.cols(),
            });
        }
        Ok(input_len)
    }
}

/// `(1 + eps_l) * h_self + x`, elementwise.
pub struct GinSelf;

impl UserFunctions for GinSelf {
    fn propagate(&self, node: NodeId, message: &[f32], emit: &mut dyn FnMut(NodeId, &[f32])) {
        send_to_self(node, message, emit)
    }

    fn group(&self, _node: NodeId, payloads: &[&[f32]]) -> Option<Vector> {
        last_payload(payloads)
    }

    fn apply(&self, x: Vector, ctx: &ApplyContext<'_>) -> Result<Vector> {
        let scale = 1.0 + ctx.weights.epsilon(ctx.layer)?;
        if ctx.self_message.len() != x.len() {
            return Err(Error::DimensionMismatch {
                context: "gin_self",
                expected: x.len(),
                found: ctx.self_message.len(),
            });
        }
        Ok(Vector::from_trusted(
            ctx.self_message
                .iter()
                .zip(x.iter())
                .map(|(h, a)| scale * h + a)
                .collect(),
        ))
    }

    fn output_len(
        &self,
        layer: usize,
        input_len: usize,
        self_len: usize,
        weights: &WeightSet,
    ) -> Result<usize> {
        weights.epsilon(layer)?;
        if input_len != self_len {
            return Err(Error::DimensionMismatch {
                context: "gin_self",
                expected: input_len,
                found: self_len,
            });
        }
        Ok(input_len)
    }
}
