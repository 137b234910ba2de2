//! Per-layer event queues: an event list plus a shared message list.

use std::collections::BTreeMap;

use crate::graph::NodeId;
use crate::tensor::{reduce_into, Aggregator, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventOp {
    Add,
    Del,
}

/// Apply (`Add`) or cancel (`Del`) the message at `msg_idx` on `target`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub op: EventOp,
    pub target: NodeId,
    pub msg_idx: usize,
}

/// A custom event created by a user function. `hook` indexes the layer's
/// user functions in first-use order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UserEvent {
    pub hook: usize,
    pub target: NodeId,
    pub msg_idx: usize,
}

/// Append-only store of equal-length vectors shared between events.
#[derive(Clone, Debug)]
pub struct MessageList {
    len: usize,
    data: Vec<f32>,
}

impl MessageList {
    pub fn new(len: usize) -> Self {
        Self { len, data: Vec::new() }
    }

    pub fn push(&mut self, v: &[f32]) -> usize {
        assert_eq!(v.len(), self.len, "message length for this layer");
        self.data.extend_from_slice(v);
        self.count() - 1
    }

    pub fn get(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.len..(idx + 1) * self.len]
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.len).unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct EventQueue {
    pub events: Vec<Event>,
    pub messages: MessageList,
    pub user_events: Vec<UserEvent>,
}

impl EventQueue {
    pub fn new(message_len: usize) -> Self {
        Self {
            events: Vec::new(),
            messages: MessageList::new(message_len),
            user_events: Vec::new(),
        }
    }

    /// Stores `msg` once and returns its index for later events.
    pub fn push_message(&mut self, msg: &[f32]) -> usize {
        self.messages.push(msg)
    }

    pub fn push_event(&mut self, op: EventOp, target: NodeId, msg_idx: usize) {
        debug_assert!(msg_idx < self.messages.count());
        self.events.push(Event { op, target, msg_idx });
    }

    pub fn push_user_event(&mut self, hook: usize, target: NodeId, payload: &[f32]) {
        let msg_idx = self.messages.push(payload);
        self.user_events.push(UserEvent { hook, target, msg_idx });
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty() && self.user_events.is_empty()
    }
}

/// All native events heading to one node, reduced per operation.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedEvents {
    pub target: NodeId,
    pub del_reduced: Option<Vector>,
    pub add_reduced: Option<Vector>,
}

type Pending = (Option<Vec<f32>>, Option<Vec<f32>>);

fn fold(agg: Aggregator, slot: &mut Option<Vec<f32>>, msg: &[f32]) {
    match slot {
        Some(acc) => reduce_into(agg, acc, msg),
        None => *slot = Some(msg.to_vec()),
    }
}

/// Groups events by target (ascending node id) and reduces the deleted and
/// added messages of each target with `agg`.
pub fn group_and_reduce(queue: &EventQueue, agg: Aggregator) -> Vec<GroupedEvents> {
    let mut groups: BTreeMap<NodeId, Pending> = BTreeMap::new();
    for e in &queue.events {
        let (del, add) = groups.entry(e.target).or_default();
        let msg = queue.messages.get(e.msg_idx);
        match e.op {
            EventOp::Del => fold(agg, del, msg),
            EventOp::Add => fold(agg, add, msg),
        }
    }
    groups
        .into_iter()
        .map(|(target, (del, add))| GroupedEvents {
            target,
            del_reduced: del.map(Vector::from_trusted),
            add_reduced: add.map(Vector::from_trusted),
        })
        .collect()
}

/// Payloads of user events per (target, hook), in arrival order.
pub fn group_user_events(queue: &EventQueue) -> BTreeMap<NodeId, BTreeMap<usize, Vec<&[f32]>>> {
    let mut out: BTreeMap<NodeId, BTreeMap<usize, Vec<&[f32]>>> = BTreeMap::new();
    for e in &queue.user_events {
        out.entry(e.target)
            .or_default()
            .entry(e.hook)
            .or_default()
            .push(queue.messages.get(e.msg_idx));
    }
    out
}
