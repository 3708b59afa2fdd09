//! Per-sequence and fused causal graphs. Edges always point event → label.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::types::{EventId, LabelId};

/// One detected label parent inside a single sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LocalEdge<T> {
    pub label: LabelId,
    pub event: EventId,
    /// CMI column index; the cause is the event at `position + 1`.
    pub position: usize,
    pub cmi: T,
    pub cs_mean: T,
    pub cs_std: T,
    /// Mean of the label posterior before the event, over the sampled contexts.
    pub ctx_mean: T,
    /// Mean negative binary entropy of that posterior over the sampled contexts.
    pub ctx_negent: T,
}

/// Phase-1 output for one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LocalGraph<T> {
    #[serde(rename = "id")]
    pub sequence_id: String,
    /// Labels that are positive for this sequence.
    pub labels: Vec<LabelId>,
    /// Sorted by `(label, position)`; at most one edge per `(label, event)`.
    pub edges: Vec<LocalEdge<T>>,
}

impl<T: Scalar> LocalGraph<T> {
    pub fn edges_for(&self, label: LabelId) -> impl Iterator<Item = &LocalEdge<T>> {
        self.edges.iter().filter(move |e| e.label == label)
    }

    pub fn parents(&self, label: LabelId) -> BTreeSet<EventId> {
        self.edges_for(label).map(|e| e.event).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Stored edges have positive CMI, lie in `[context, len - 1)` and are
    /// unique per `(label, event)` and per `(label, position)`.
    pub fn check_invariants(&self, context: usize, len: usize) -> bool {
        let mut by_event = BTreeSet::new();
        let mut by_pos = BTreeSet::new();
        self.edges.iter().all(|e| {
            e.cmi > T::zero()
                && e.position >= context
                && e.position + 1 < len
                && by_event.insert((e.label, e.event))
                && by_pos.insert((e.label, e.position))
        })
    }
}

/// Aggregate statistics of one fused parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Parent<T> {
    pub event: EventId,
    pub frequency: T,
    pub support: u64,
    pub mi: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabelParents<T> {
    pub label: LabelId,
    /// Sorted by event id.
    pub parents: Vec<Parent<T>>,
}

/// Fused bipartite event → label graph. Only labels with support appear.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GlobalGraph<T> {
    /// Sorted by label id.
    pub labels: Vec<LabelParents<T>>,
}

impl<T: Scalar> GlobalGraph<T> {
    pub fn get(&self, label: LabelId) -> Option<&LabelParents<T>> {
        self.labels
            .binary_search_by_key(&label, |l| l.label)
            .ok()
            .map(|i| &self.labels[i])
    }

    pub fn parent_set(&self, label: LabelId) -> BTreeSet<EventId> {
        self.get(label)
            .map(|l| l.parents.iter().map(|p| p.event).collect())
            .unwrap_or_default()
    }

    pub fn edge_count(&self) -> usize {
        self.labels.iter().map(|l| l.parents.len()).sum()
    }

    pub fn edges(&self) -> BTreeSet<(LabelId, EventId)> {
        self.labels
            .iter()
            .flat_map(|l| l.parents.iter().map(move |p| (l.label, p.event)))
            .collect()
    }
}
