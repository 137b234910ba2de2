//! Deciding whether grouped events allow an in-place update of a node's
//! aggregated neighborhood.
//!
//! A position `i` needs a reset when the old aggregate equals the reduced
//! deleted message there. Reset positions are covered when the reduced added
//! message is at least as good (under the aggregator) as the deleted value:
//! every surviving neighbor is no better than the deleted value, so the
//! added value wins. Uncovered resets require recomputation.

use std::collections::BTreeSet;

use crate::engine::event::GroupedEvents;
use crate::error::{Error, Result};
use crate::tensor::{Aggregator, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionKind {
    NoDeletion,
    DeletionNoEffect,
    CoveredReset,
    ExposedReset,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 4] = [
        ConditionKind::NoDeletion,
        ConditionKind::DeletionNoEffect,
        ConditionKind::CoveredReset,
        ConditionKind::ExposedReset,
    ];

    pub fn allows_incremental(self) -> bool {
        self != ConditionKind::ExposedReset
    }

    pub fn key(self) -> &'static str {
        match self {
            ConditionKind::NoDeletion => "no_deletion",
            ConditionKind::DeletionNoEffect => "deletion_no_effect",
            ConditionKind::CoveredReset => "covered_reset",
            ConditionKind::ExposedReset => "exposed_reset",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    pub reset_positions: BTreeSet<usize>,
}

/// Classifies the effect of `grp` on a node whose previous aggregate is
/// `alpha_prev`. Equality tests are bitwise.
pub fn classify(alpha_prev: &[f32], grp: &GroupedEvents, agg: Aggregator) -> ConditionReport {
    let Some(del) = &grp.del_reduced else {
        return ConditionReport {
            kind: ConditionKind::NoDeletion,
            reset_positions: BTreeSet::new(),
        };
    };
    let reset_positions: BTreeSet<usize> = alpha_prev
        .iter()
        .zip(del.iter())
        .enumerate()
        .filter(|(_, (a, d))| a.to_bits() == d.to_bits())
        .map(|(i, _)| i)
        .collect();
    let kind = if reset_positions.is_empty() {
        ConditionKind::DeletionNoEffect
    } else {
        let covered = grp.add_reduced.as_ref().is_some_and(|add| {
            reset_positions
                .iter()
                .all(|&i| agg.select(del[i], add[i]).to_bits() == add[i].to_bits())
        });
        if covered {
            ConditionKind::CoveredReset
        } else {
            ConditionKind::ExposedReset
        }
    };
    ConditionReport {
        kind,
        reset_positions,
    }
}

/// `A(alpha_prev, m_A)`, or `alpha_prev` when nothing is added. Reset
/// positions take the added value directly.
pub fn incremental_update(
    alpha_prev: &[f32],
    grp: &GroupedEvents,
    report: &ConditionReport,
    agg: Aggregator,
) -> Result<Vector> {
    if !report.kind.allows_incremental() {
        return Err(Error::ContractViolation(format!(
            "incremental update of node {} after an exposed reset",
            grp.target
        )));
    }
    let Some(add) = &grp.add_reduced else {
        return Ok(Vector::from_trusted(alpha_prev.to_vec()));
    };
    let mut out: Vec<f32> = alpha_prev
        .iter()
        .zip(add.iter())
        .map(|(&a, &m)| agg.select(a, m))
        .collect();
    for &i in &report.reset_positions {
        out[i] = add[i];
    }
    Ok(Vector::from_trusted(out))
}
