//! Phase 2: fusing per-sequence graphs into one label-to-event graph.

mod adaptive;
mod beta;

pub use adaptive::AdaptiveThreshold;
pub use beta::BetaMixture;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GlobalGraph, LabelParents, LocalGraph, Parent};
use crate::info::{clamp_prob, EPS};
use crate::scalar::Scalar;
use crate::types::{EventId, LabelId, LabeledSequence};

/// Streaming sums over the detections of one `(label, event)` pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EdgeStats<T> {
    pub count: u64,
    pub cmi_sum: T,
    pub ctx_mean_sum: T,
    pub ctx_negent_sum: T,
}

impl<T: Scalar> EdgeStats<T> {
    fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.cmi_sum = self.cmi_sum + other.cmi_sum;
        self.ctx_mean_sum = self.ctx_mean_sum + other.ctx_mean_sum;
        self.ctx_negent_sum = self.ctx_negent_sum + other.ctx_negent_sum;
    }

    /// Mean over detections of `cmi + mean_z KL(P(y | z) ‖ marginal)`.
    pub fn mean_mi(&self, marginal: T) -> T {
        if self.count == 0 {
            return T::zero();
        }
        let one = T::one();
        let n = T::of(self.count as f64);
        let q = clamp_prob(marginal, T::of(EPS));
        let ig = self.ctx_negent_sum - self.ctx_mean_sum * q.ln() - (n - self.ctx_mean_sum) * (one - q).ln();
        ((self.cmi_sum + ig.max(T::zero())) / n).max(T::zero())
    }
}

/// Edge counts and label supports accumulated over local graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTally<T> {
    /// Number of sequences that went through discovery.
    pub processed: u64,
    /// `support[j]`: processed sequences where label `j` is positive.
    pub support: Vec<u64>,
    pub edges: BTreeMap<(LabelId, EventId), EdgeStats<T>>,
}

const CHUNK: usize = 256;

impl<T: Scalar> EdgeTally<T> {
    pub fn empty(n_labels: usize) -> Self {
        Self {
            processed: 0,
            support: vec![0; n_labels],
            edges: BTreeMap::new(),
        }
    }

    pub fn n_labels(&self) -> usize {
        self.support.len()
    }

    /// Adds one sequence. Edges of labels that are not positive are ignored.
    pub fn add(&mut self, graph: &LocalGraph<T>) -> Result<()> {
        self.processed += 1;
        let mut positive = vec![false; self.n_labels()];
        for &l in &graph.labels {
            *positive.get_mut(l.index()).ok_or(Error::UnknownLabel(l.index()))? = true;
            self.support[l.index()] += 1;
        }
        for e in &graph.edges {
            if e.label.index() >= positive.len() {
                return Err(Error::UnknownLabel(e.label.index()));
            }
            if !positive[e.label.index()] {
                continue;
            }
            let s = self.edges.entry((e.label, e.event)).or_default();
            s.count += 1;
            s.cmi_sum = s.cmi_sum + e.cmi;
            s.ctx_mean_sum = s.ctx_mean_sum + e.ctx_mean;
            s.ctx_negent_sum = s.ctx_negent_sum + e.ctx_negent;
        }
        Ok(())
    }

    pub fn merge(mut self, other: &Self) -> Self {
        assert_eq!(self.n_labels(), other.n_labels(), "tallies over different label sets");
        self.processed += other.processed;
        for (a, b) in self.support.iter_mut().zip(&other.support) {
            *a += b;
        }
        for (k, v) in &other.edges {
            self.edges.entry(*k).or_default().merge(v);
        }
        self
    }

    /// Tallies graphs in parallel. Chunks are merged in input order so the
    /// floating-point sums do not depend on the thread count.
    pub fn from_graphs(graphs: &[LocalGraph<T>], n_labels: usize) -> Result<Self> {
        let parts: Vec<Result<Self>> = graphs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut t = Self::empty(n_labels);
                for g in chunk {
                    t.add(g)?;
                }
                Ok(t)
            })
            .collect();
        parts
            .into_iter()
            .try_fold(Self::empty(n_labels), |acc, p| Ok(acc.merge(&p?)))
    }

    pub fn count(&self, label: LabelId, event: EventId) -> u64 {
        self.edges.get(&(label, event)).map_or(0, |s| s.count)
    }

    pub fn frequency(&self, label: LabelId, event: EventId) -> T {
        let m = self.support[label.index()];
        if m == 0 {
            return T::zero();
        }
        T::of(self.count(label, event) as f64 / m as f64)
    }

    /// Share of processed sequences where the label is positive.
    pub fn marginal(&self, label: LabelId) -> T {
        if self.processed == 0 {
            return T::zero();
        }
        T::of(self.support[label.index()] as f64 / self.processed as f64)
    }

    pub fn mean_mi(&self, label: LabelId, event: EventId) -> T {
        self.edges
            .get(&(label, event))
            .map_or(T::zero(), |s| s.mean_mi(self.marginal(label)))
    }

    fn build<F>(&self, mut keep: F) -> GlobalGraph<T>
    where
        F: FnMut(LabelId, EventId, &EdgeStats<T>) -> bool,
    {
        let mut labels: Vec<LabelParents<T>> = self
            .support
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > 0)
            .map(|(j, _)| LabelParents {
                label: LabelId::from(j),
                parents: vec![],
            })
            .collect();
        let slot: HashMap<LabelId, usize> = labels.iter().enumerate().map(|(i, l)| (l.label, i)).collect();
        for (&(label, event), s) in &self.edges {
            if s.count == 0 || !keep(label, event, s) {
                continue;
            }
            let Some(&i) = slot.get(&label) else { continue };
            labels[i].parents.push(Parent {
                event,
                frequency: self.frequency(label, event),
                support: self.support[label.index()],
                mi: s.mean_mi(self.marginal(label)),
            });
        }
        GlobalGraph { labels }
    }
}

/// Tallies local graphs against the corpus they were computed from. Label
/// positivity is taken from the corpus.
pub fn tally<T: Scalar>(graphs: &[LocalGraph<T>], sequences: &[LabeledSequence]) -> Result<EdgeTally<T>> {
    let n_labels = sequences.first().map_or(0, |s| s.labels.len());
    let by_id: HashMap<&str, &LabeledSequence> = sequences.iter().map(|s| (s.id.as_str(), s)).collect();
    let aligned = graphs
        .iter()
        .map(|g| {
            let s = by_id
                .get(g.sequence_id.as_str())
                .ok_or_else(|| Error::UnknownSequence(g.sequence_id.clone()))?;
            Ok(LocalGraph {
                sequence_id: g.sequence_id.clone(),
                labels: s.positive_labels(),
                edges: g.edges.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EdgeTally::from_graphs(&aligned, n_labels)
}

pub fn fuse_union<T: Scalar>(tally: &EdgeTally<T>) -> GlobalGraph<T> {
    tally.build(|_, _, _| true)
}

/// Keeps edges detected in at least a fraction `tau` of the label's support.
pub fn fuse_frequency<T: Scalar>(tally: &EdgeTally<T>, tau: T) -> GlobalGraph<T> {
    tally.build(|l, e, _| tally.frequency(l, e) >= tau)
}

pub fn fuse_adaptive<T: Scalar>(tally: &EdgeTally<T>, tau_max: T, tau_min: T) -> GlobalGraph<T> {
    let Some(threshold) = AdaptiveThreshold::fit(&tally.support, tau_max, tau_min) else {
        log::warn!("no label has support; adaptive fusion returns an empty graph");
        return GlobalGraph::default();
    };
    tally.build(|l, e, _| tally.frequency(l, e) >= threshold.eval(T::of(tally.support[l.index()] as f64)))
}

const MIN_BETA_SAMPLES: usize = 8;
const MI_RESCALE: f64 = 1.05;

/// Fits a two-component Beta mixture to the rescaled mean MI of every edge
/// and drops edges below the `1 - target_fpr` quantile of the lower
/// component. Falls back to frequency fusion at 0.5 when the fit is not
/// possible.
pub fn fuse_beta_fpr<T: Scalar>(tally: &EdgeTally<T>, target_fpr: f64) -> GlobalGraph<T> {
    let fallback = || fuse_frequency(tally, T::of(0.5));
    let keys: Vec<(LabelId, EventId)> = tally
        .edges
        .iter()
        .filter(|(&(l, _), s)| s.count > 0 && tally.support[l.index()] > 0)
        .map(|(k, _)| *k)
        .collect();
    if keys.len() < MIN_BETA_SAMPLES {
        log::warn!("only {} edges; beta_fpr falls back to frequency 0.5", keys.len());
        return fallback();
    }
    let mi: Vec<f64> = keys.iter().map(|&(l, e)| tally.mean_mi(l, e).as_f64()).collect();
    let max = mi.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        log::warn!("all edge MI values are zero; beta_fpr falls back to frequency 0.5");
        return fallback();
    }
    let scaled: Vec<f64> = mi.iter().map(|m| m / (MI_RESCALE * max)).collect();
    let Some(fit) = BetaMixture::fit(&scaled) else {
        log::warn!("degenerate beta mixture; beta_fpr falls back to frequency 0.5");
        return fallback();
    };
    let cut = fit.spurious_quantile(1.0 - target_fpr);
    let kept: std::collections::BTreeSet<(LabelId, EventId)> = keys
        .iter()
        .zip(&scaled)
        .filter(|&(_, &x)| x >= cut)
        .map(|(k, _)| *k)
        .collect();
    tally.build(|l, e, _| kept.contains(&(l, e)))
}

/// Score contribution penalty of one parent of `label`.
pub fn parent_penalty<T: Scalar>(tally: &EdgeTally<T>, label: LabelId, alpha_reg: T, use_imbalance: bool) -> T {
    if !use_imbalance {
        return alpha_reg;
    }
    let m_j = tally.support[label.index()] as f64;
    alpha_reg * T::of((tally.processed as f64 / m_j + 1.0).ln())
}

/// Greedy backward elimination from the union graph under the decomposable
/// score `Σ (MI(y, x) − penalty(y))`, visiting candidate edges in `order`.
///
/// Each step removes the edge whose removal gains the most (ties go to the
/// earliest in `order`) until no removal improves the score. Edges missing
/// from `order` are never removed.
pub fn backward_eliminate<T: Scalar>(
    tally: &EdgeTally<T>,
    alpha_reg: T,
    use_imbalance: bool,
    order: &[(LabelId, EventId)],
) -> GlobalGraph<T> {
    let gain = |&(l, e): &(LabelId, EventId)| parent_penalty(tally, l, alpha_reg, use_imbalance) - tally.mean_mi(l, e);
    let mut candidates: Vec<(usize, T)> = order
        .iter()
        .enumerate()
        .filter(|(_, k)| tally.edges.contains_key(k))
        .map(|(i, k)| (i, gain(k)))
        .collect();
    // Gains of different edges do not interact, so one sort replaces the
    // repeated arg-max of the greedy loop.
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite gains").then(a.0.cmp(&b.0)));
    let mut removed = std::collections::BTreeSet::new();
    for (i, g) in candidates {
        if g <= T::zero() {
            break;
        }
        removed.insert(order[i]);
    }
    tally.build(|l, e, _| !removed.contains(&(l, e)))
}

/// BES with the plain MI score (`use_imbalance = false`) or CAIG, whose
/// penalty `alpha_reg · ln(m_total / m_j + 1)` grows for rare labels.
pub fn fuse_bes_caig<T: Scalar>(tally: &EdgeTally<T>, alpha_reg: T, use_imbalance: bool) -> GlobalGraph<T> {
    let order: Vec<_> = tally.edges.keys().copied().collect();
    backward_eliminate(tally, alpha_reg, use_imbalance, &order)
}

/// A fusion rule with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Criterion {
    Union,
    Frequency { tau: f64 },
    Adaptive { tau_max: f64, tau_min: f64 },
    BetaFpr { fpr: f64 },
    BesMi { alpha_reg: f64 },
    Caig { alpha_reg: f64 },
}

/// Parameter values used when building a [`Criterion`] from its name.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionParams {
    pub tau: f64,
    pub tau_max: f64,
    pub tau_min: f64,
    pub fpr: f64,
    pub alpha_reg: f64,
}

impl Default for CriterionParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            tau_max: 0.5,
            tau_min: 0.05,
            fpr: 0.05,
            alpha_reg: 0.01,
        }
    }
}

impl Criterion {
    pub const NAMES: [&'static str; 6] = ["union", "frequency", "adaptive", "beta_fpr", "bes_mi", "caig"];

    pub fn from_name(name: &str, p: &CriterionParams) -> Result<Self> {
        let c = match name {
            "union" => Self::Union,
            "frequency" => Self::Frequency { tau: p.tau },
            "adaptive" => Self::Adaptive {
                tau_max: p.tau_max,
                tau_min: p.tau_min,
            },
            "beta_fpr" => Self::BetaFpr { fpr: p.fpr },
            "bes_mi" => Self::BesMi { alpha_reg: p.alpha_reg },
            "caig" => Self::Caig { alpha_reg: p.alpha_reg },
            other => return Err(Error::UnknownCriterion(other.to_string())),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Union => "union",
            Self::Frequency { .. } => "frequency",
            Self::Adaptive { .. } => "adaptive",
            Self::BetaFpr { .. } => "beta_fpr",
            Self::BesMi { .. } => "bes_mi",
            Self::Caig { .. } => "caig",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Union => true,
            Self::Frequency { tau } => (0.0..=1.0).contains(&tau),
            Self::Adaptive { tau_max, tau_min } => {
                (0.0..=1.0).contains(&tau_min) && (0.0..=1.0).contains(&tau_max) && tau_min <= tau_max
            }
            Self::BetaFpr { fpr } => fpr > 0.0 && fpr < 1.0,
            Self::BesMi { alpha_reg } | Self::Caig { alpha_reg } => alpha_reg >= 0.0 && alpha_reg.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad parameters for criterion {self}")))
        }
    }

    pub fn apply<T: Scalar>(&self, tally: &EdgeTally<T>) -> GlobalGraph<T> {
        match *self {
            Self::Union => fuse_union(tally),
            Self::Frequency { tau } => fuse_frequency(tally, T::of(tau)),
            Self::Adaptive { tau_max, tau_min } => fuse_adaptive(tally, T::of(tau_max), T::of(tau_min)),
            Self::BetaFpr { fpr } => fuse_beta_fpr(tally, fpr),
            Self::BesMi { alpha_reg } => fuse_bes_caig(tally, T::of(alpha_reg), false),
            Self::Caig { alpha_reg } => fuse_bes_caig(tally, T::of(alpha_reg), true),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Union => write!(f, "union"),
            Self::Frequency { tau } => write!(f, "frequency(tau={tau})"),
            Self::Adaptive { tau_max, tau_min } => write!(f, "adaptive(tau_max={tau_max}, tau_min={tau_min})"),
            Self::BetaFpr { fpr } => write!(f, "beta_fpr(fpr={fpr})"),
            Self::BesMi { alpha_reg } => write!(f, "bes_mi(alpha_reg={alpha_reg})"),
            Self::Caig { alpha_reg } => write!(f, "caig(alpha_reg={alpha_reg})"),
        }
    }
}
