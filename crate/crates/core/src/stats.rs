//! Per-round counters and their aggregation into reports.
//!
//! A round serializes to one line of space-separated `key=value` pairs.
//! Per-layer keys are prefixed `l<index>.`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::checkpoint::FetchCounts;
use crate::engine::ConditionKind;
use crate::error::{Error, Result};
use crate::graph::NodeId;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LayerStats {
    pub no_deletion: u64,
    pub deletion_no_effect: u64,
    pub covered_reset: u64,
    pub exposed_reset: u64,
    /// Native events in the layer's queue.
    pub events: u64,
    pub user_events: u64,
    /// Targets of native events (the sum of the four condition counts).
    pub targets: u64,
    /// Targets reached only by user events.
    pub self_only: u64,
    pub recomputes: u64,
    /// Targets whose aggregate came out unchanged.
    pub pruned: u64,
    /// Targets whose new message equals the old one.
    pub unchanged_messages: u64,
    pub fetches: FetchCounts,
    /// Nodes written at this layer.
    pub dirty: u64,
}

impl LayerStats {
    pub fn record(&mut self, kind: ConditionKind) {
        *self.slot(kind) += 1;
    }

    pub fn count(&self, kind: ConditionKind) -> u64 {
        match kind {
            ConditionKind::NoDeletion => self.no_deletion,
            ConditionKind::DeletionNoEffect => self.deletion_no_effect,
            ConditionKind::CoveredReset => self.covered_reset,
            ConditionKind::ExposedReset => self.exposed_reset,
        }
    }

    fn slot(&mut self, kind: ConditionKind) -> &mut u64 {
        match kind {
            ConditionKind::NoDeletion => &mut self.no_deletion,
            ConditionKind::DeletionNoEffect => &mut self.deletion_no_effect,
            ConditionKind::CoveredReset => &mut self.covered_reset,
            ConditionKind::ExposedReset => &mut self.exposed_reset,
        }
    }

    fn fields(&self) -> [(&'static str, u64); 14] {
        [
            ("no_deletion", self.no_deletion),
            ("deletion_no_effect", self.deletion_no_effect),
            ("covered_reset", self.covered_reset),
            ("exposed_reset", self.exposed_reset),
            ("events", self.events),
            ("user_events", self.user_events),
            ("targets", self.targets),
            ("self_only", self.self_only),
            ("recomputes", self.recomputes),
            ("pruned", self.pruned),
            ("unchanged_messages", self.unchanged_messages),
            ("checkpoint_fetches", self.fetches.checkpoint),
            ("feature_fetches", self.fetches.feature),
            ("dirty", self.dirty),
        ]
    }

    fn set(&mut self, key: &str, v: u64) -> bool {
        let slot = match key {
            "no_deletion" => &mut self.no_deletion,
            "deletion_no_effect" => &mut self.deletion_no_effect,
            "covered_reset" => &mut self.covered_reset,
            "exposed_reset" => &mut self.exposed_reset,
            "events" => &mut self.events,
            "user_events" => &mut self.user_events,
            "targets" => &mut self.targets,
            "self_only" => &mut self.self_only,
            "recomputes" => &mut self.recomputes,
            "pruned" => &mut self.pruned,
            "unchanged_messages" => &mut self.unchanged_messages,
            "checkpoint_fetches" => &mut self.fetches.checkpoint,
            "feature_fetches" => &mut self.fetches.feature,
            "dirty" => &mut self.dirty,
            _ => return false,
        };
        *slot = v;
        true
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundStats {
    pub round: u64,
    /// Edge updates submitted in the round.
    pub updates: usize,
    /// Edges whose presence actually changed.
    pub net_edges: usize,
    pub layers: Vec<LayerStats>,
    pub baseline_fetches: Option<u64>,
    /// Nodes written per layer. Not serialized.
    pub dirty_sets: Vec<Vec<NodeId>>,
}

impl RoundStats {
    pub fn engine_fetches(&self) -> u64 {
        self.layers.iter().map(|l| l.fetches.total()).sum()
    }

    pub fn condition_total(&self, kind: ConditionKind) -> u64 {
        self.layers.iter().map(|l| l.count(kind)).sum()
    }

    pub fn to_record(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "round={} updates={} net_edges={} layers={}",
            self.round,
            self.updates,
            self.net_edges,
            self.layers.len()
        )
        .unwrap();
        for (i, l) in self.layers.iter().enumerate() {
            for (key, v) in l.fields() {
                write!(s, " l{i}.{key}={v}").unwrap();
            }
        }
        write!(s, " engine_fetches={}", self.engine_fetches()).unwrap();
        if let Some(b) = self.baseline_fetches {
            write!(s, " baseline_fetches={b}").unwrap();
        }
        s
    }

    pub fn parse_record(line: &str) -> Result<Self> {
        let bad = |message: String| Error::Parse { line: 1, message };
        let mut kv = BTreeMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{tok}`")))?;
            let v: u64 = v.parse().map_err(|_| bad(format!("bad value in `{tok}`")))?;
            kv.insert(k, v);
        }
        let mut get = |k: &str| kv.remove(k).ok_or_else(|| bad(format!("missing `{k}`")));
        let mut st = RoundStats {
            round: get("round")?,
            updates: get("updates")? as usize,
            net_edges: get("net_edges")? as usize,
            layers: vec![LayerStats::default(); get("layers")? as usize],
            ..Default::default()
        };
        let engine = get("engine_fetches")?;
        st.baseline_fetches = kv.remove("baseline_fetches");
        for (k, v) in kv {
            let (layer, field) = k
                .strip_prefix('l')
                .and_then(|rest| rest.split_once('.'))
                .and_then(|(i, f)| Some((i.parse::<usize>().ok()?, f)))
                .ok_or_else(|| bad(format!("unknown key `{k}`")))?;
            let l = st
                .layers
                .get_mut(layer)
                .ok_or_else(|| bad(format!("layer out of range in `{k}`")))?;
            if !l.set(field, v) {
                return Err(bad(format!("unknown key `{k}`")));
            }
        }
        if st.engine_fetches() != engine {
            return Err(bad("engine_fetches does not match the layer sums".into()));
        }
        Ok(st)
    }
}

pub fn parse_records(text: &str) -> Result<Vec<RoundStats>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            RoundStats::parse_record(l).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse { line: i + 1, message },
                e => e,
            })
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Totals over a stream of rounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rounds: usize,
    pub conditions: [u64; 4],
    pub engine_fetches: u64,
    pub baseline_fetches: Option<u64>,
    /// `engine / baseline` for every round with a nonzero baseline count.
    pub round_fetch_ratios: Vec<f64>,
}

impl Report {
    pub fn from_rounds(rounds: &[RoundStats]) -> Self {
        let mut r = Report {
            rounds: rounds.len(),
            ..Default::default()
        };
        for st in rounds {
            for (i, kind) in ConditionKind::ALL.into_iter().enumerate() {
                r.conditions[i] += st.condition_total(kind);
            }
            r.engine_fetches += st.engine_fetches();
            if let Some(b) = st.baseline_fetches {
                *r.baseline_fetches.get_or_insert(0) += b;
                if b > 0 {
                    r.round_fetch_ratios.push(st.engine_fetches() as f64 / b as f64);
                }
            }
        }
        r
    }

    pub fn targets(&self) -> u64 {
        self.conditions.iter().sum()
    }

    pub fn fraction(&self, kind: ConditionKind) -> f64 {
        let total = self.targets();
        if total == 0 {
            return 0.0;
        }
        self.conditions[kind as usize] as f64 / total as f64
    }

    /// Share of targets resolved without recomputation.
    pub fn incremental_fraction(&self) -> f64 {
        if self.targets() == 0 {
            return 0.0;
        }
        1.0 - self.fraction(ConditionKind::ExposedReset)
    }

    /// `baseline / engine` over the whole stream.
    pub fn reduction_factor(&self) -> Option<f64> {
        let b = self.baseline_fetches?;
        (self.engine_fetches > 0).then(|| b as f64 / self.engine_fetches as f64)
    }

    pub fn median_round_ratio(&self) -> Option<f64> {
        median(&self.round_fetch_ratios)
    }

    pub fn to_table(&self, name: &str) -> String {
        let mut s = String::new();
        writeln!(s, "{name}: {} rounds, {} grouped targets", self.rounds, self.targets()).unwrap();
        for kind in ConditionKind::ALL {
            writeln!(
                s,
                "  {:<20} {:>10} {:>7.2}%",
                kind.key(),
                self.conditions[kind as usize],
                100.0 * self.fraction(kind)
            )
            .unwrap();
        }
        writeln!(s, "  {:<20} {:>10}", "engine_fetches", self.engine_fetches).unwrap();
        if let Some(b) = self.baseline_fetches {
            writeln!(s, "  {:<20} {:>10}", "baseline_fetches", b).unwrap();
        }
        if let Some(f) = self.reduction_factor() {
            writeln!(s, "  {:<20} {:>10.2}x", "reduction", f).unwrap();
        }
        if let Some(m) = self.median_round_ratio() {
            writeln!(s, "  {:<20} {:>10.4}", "median_round_ratio", m).unwrap();
        }
        s
    }
}
