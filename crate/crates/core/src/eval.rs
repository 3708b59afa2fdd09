//! Scoring fused graphs against known parent sets.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ConditionalEstimator;
use crate::fusion::{Criterion, EdgeTally};
use crate::graph::GlobalGraph;
use crate::io::GroundTruth;
use crate::oneshot::{discover_batch, OneShotConfig};
use crate::scalar::Scalar;
use crate::types::{LabelId, LabeledSequence};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Precision is 0 for an empty prediction unless the truth is empty too;
    /// recall is 1 for an empty truth.
    pub fn of(predicted: usize, truth: usize, hits: usize) -> Self {
        let precision = match (predicted, truth) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => hits as f64 / predicted as f64,
        };
        let recall = if truth == 0 { 1.0 } else { hits as f64 / truth as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: LabelId,
    pub support: u64,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sequences the graph was fused from.
    pub m: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<String>,
    pub weighted: Metrics,
    #[serde(rename = "macro")]
    pub macro_avg: Metrics,
    pub labels: Vec<LabelScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
}

/// Scores `graph` label by label. Labels with zero support are left out of
/// both averages; the weighted average uses the supports as weights.
pub fn score<T: Scalar>(graph: &GlobalGraph<T>, truth: &GroundTruth, support: &[u64]) -> Result<EvalReport> {
    if let Some(l) = graph.labels.iter().find(|l| l.label.index() >= truth.len()) {
        return Err(Error::UnknownLabel(l.label.index()));
    }
    let mut labels = Vec::new();
    for (j, true_set) in truth.iter().enumerate() {
        let m_j = support.get(j).copied().unwrap_or(0);
        if m_j == 0 {
            continue;
        }
        let predicted = graph.parent_set(LabelId::from(j));
        let hits = predicted.intersection(true_set).count();
        labels.push(LabelScore {
            label: LabelId::from(j),
            support: m_j,
            metrics: Metrics::of(predicted.len(), true_set.len(), hits),
        });
    }
    let total: f64 = labels.iter().map(|l| l.support as f64).sum();
    let avg = |w: &dyn Fn(&LabelScore) -> f64, norm: f64| {
        if norm == 0.0 {
            return Metrics::default();
        }
        let sum = |f: fn(&Metrics) -> f64| labels.iter().map(|l| w(l) * f(&l.metrics)).sum::<f64>() / norm;
        Metrics {
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f1: sum(|m| m.f1),
        }
    };
    Ok(EvalReport {
        m: 0,
        criterion: None,
        weighted: avg(&|l| l.support as f64, total),
        macro_avg: avg(&|_| 1.0, labels.len() as f64),
        labels,
        wall_clock_secs: None,
    })
}

/// Scores a graph fused from `tally`, taking supports and `m` from it.
pub fn score_tally<T: Scalar>(graph: &GlobalGraph<T>, truth: &GroundTruth, tally: &EdgeTally<T>) -> Result<EvalReport> {
    let mut r = score(graph, truth, &tally.support)?;
    r.m = tally.processed;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub criterion: Criterion,
    pub report: EvalReport,
}

/// Runs discovery on the first `max(m_grid)` sequences once and, for every
/// `m` in the grid, fuses the first `m` local graphs under each criterion.
/// Per-sequence discovery is deterministic, so this equals rerunning both
/// phases for every cell. Rows are ordered by `m` then criterion.
#[allow(clippy::too_many_arguments)]
pub fn sweep<T: Scalar, E>(
    corpus: &[LabeledSequence],
    estimator: &E,
    truth: &GroundTruth,
    cfg: &OneShotConfig,
    criteria: &[Criterion],
    m_grid: &[usize],
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>>
where
    E: ConditionalEstimator<T> + ?Sized,
{
    let max_m = m_grid.iter().copied().max().unwrap_or(0);
    if max_m > corpus.len() {
        return Err(Error::InvalidConfig(format!(
            "sweep needs {max_m} sequences, corpus has {}",
            corpus.len()
        )));
    }
    let start = Instant::now();
    let found = discover_batch(estimator, &corpus[..max_m], cfg, seed, workers)?;
    let discover_secs = start.elapsed().as_secs_f64() / max_m.max(1) as f64;
    // Index of the first local graph that belongs to a sequence at or beyond m.
    let ids: Vec<&str> = found.graphs.iter().map(|g| g.sequence_id.as_str()).collect();
    let position: std::collections::HashMap<&str, usize> =
        corpus[..max_m].iter().enumerate().map(|(k, s)| (s.id.as_str(), k)).collect();
    let n_labels = truth.len();
    let mut rows = Vec::with_capacity(m_grid.len() * criteria.len());
    for &m in m_grid {
        let cut = ids.iter().take_while(|id| position[*id] < m).count();
        let t0 = Instant::now();
        let tally = EdgeTally::from_graphs(&found.graphs[..cut], n_labels)?;
        let tally_secs = t0.elapsed().as_secs_f64();
        for c in criteria {
            let t1 = Instant::now();
            let graph = c.apply(&tally);
            let mut report = score_tally(&graph, truth, &tally)?;
            report.criterion = Some(c.to_string());
            report.wall_clock_secs = Some(discover_secs * m as f64 + tally_secs + t1.elapsed().as_secs_f64());
            rows.push(SweepRow {
                m,
                criterion: *c,
                report,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "m,criterion,weighted_precision,weighted_recall,weighted_f1,macro_precision,macro_recall,macro_f1,seconds";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let (w, a) = (&r.report.weighted, &r.report.macro_avg);
        let _ = writeln!(
            out,
            "{},\"{}\",{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.m,
            r.criterion,
            w.precision,
            w.recall,
            w.f1,
            a.precision,
            a.recall,
            a.f1,
            r.report.wall_clock_secs.unwrap_or(0.0)
        );
    }
    out
}
