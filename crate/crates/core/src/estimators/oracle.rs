//! Exact conditionals of a synthetic world.
//!
//! Label posteriors come from a backward dynamic programme over the state
//! `(last event, satisfied positive literals, violated, steps remaining)`.
//! The violated flag never needs storage: a violated state has value 0.

use rand::Rng;
use rayon::prelude::*;

use super::ConditionalEstimator;
use crate::error::{Error, Result};
use crate::info::{clamp_prob, EPS};
use crate::scalar::Scalar;
use crate::seed;
use crate::synthgen::{GeneratorSpec, Rule};
use crate::types::EventId;

/// Rules with more positive literals than this are not tabulated.
pub const MAX_EXACT_LITERALS: usize = 16;
/// Rollouts per query for rules that are not tabulated.
pub const ROLLOUTS: usize = 4096;
/// Upper bound on table entries per label before falling back to rollouts.
const MAX_TABLE_ENTRIES: usize = 1 << 24;

const NOT_LITERAL: u32 = u32::MAX;

struct RuleIndex {
    /// Bit position of each event among the positive literals.
    bit: Vec<u32>,
    negated: Vec<bool>,
    full: u32,
    has_negated: bool,
}

impl RuleIndex {
    fn new(rule: &Rule, n_events: usize) -> Self {
        let mut bit = vec![NOT_LITERAL; n_events];
        for (k, e) in rule.positive.iter().enumerate() {
            bit[e.index()] = k as u32;
        }
        let mut negated = vec![false; n_events];
        for e in &rule.negated {
            negated[e.index()] = true;
        }
        Self {
            bit,
            negated,
            full: ((1u64 << rule.positive.len()) - 1) as u32,
            has_negated: !rule.negated.is_empty(),
        }
    }

    #[inline]
    fn mask_of(&self, e: EventId) -> u32 {
        match self.bit[e.index()] {
            NOT_LITERAL => 0,
            b => 1 << b,
        }
    }
}

/// Running `(mask, violated)` state of one rule along a prefix.
#[derive(Clone, Copy, Default)]
struct RuleState {
    mask: u32,
    violated: bool,
}

impl RuleState {
    #[inline]
    fn push(&mut self, idx: &RuleIndex, e: EventId) {
        if e == EventId::START {
            return;
        }
        self.violated |= idx.negated[e.index()];
        self.mask |= idx.mask_of(e);
    }
}

enum Head<T> {
    /// `table[(r * n_masks + mask) * n_events + last]`.
    Exact { table: Vec<T>, n_masks: usize },
    Rollout,
}

/// The generator's own conditionals (perfect density estimator).
pub struct OracleEstimator<T> {
    spec: GeneratorSpec,
    trans: Vec<T>,
    rules: Vec<RuleIndex>,
    heads: Vec<Head<T>>,
    eps: T,
}

impl<T: Scalar> OracleEstimator<T> {
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate().map_err(|e| match e {
            Error::InvalidSpec(m) => Error::InvalidSpec(format!("oracle: {m}")),
            other => other,
        })?;
        let v = spec.n_events();
        let trans: Vec<T> = spec
            .transitions
            .iter()
            .flat_map(|row| row.iter().map(|&p| T::of(p)))
            .collect();
        let rules: Vec<RuleIndex> = spec.rules.iter().map(|r| RuleIndex::new(r, v)).collect();
        let horizon = spec.length.saturating_sub(1);
        let heads = spec
            .rules
            .par_iter()
            .zip(rules.par_iter())
            .map(|(rule, idx)| {
                let n_masks = 1usize << rule.positive.len();
                let entries = (horizon + 1) * n_masks * v;
                if rule.positive.len() > MAX_EXACT_LITERALS || entries > MAX_TABLE_ENTRIES {
                    log::warn!(
                        "rule `{rule}` not tabulated ({} positive literals); using {ROLLOUTS} rollouts",
                        rule.positive.len()
                    );
                    Head::Rollout
                } else {
                    Head::Exact {
                        table: tabulate(&trans, v, idx, horizon, n_masks),
                        n_masks,
                    }
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            trans,
            rules,
            heads,
            eps: T::of(EPS),
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Unclamped probability that rule `j` holds at sequence end, given the
    /// rule state after `prefix_len` events ending in `last`.
    fn value(&self, j: usize, st: RuleState, last: EventId, prefix_len: usize, prefix: &[EventId]) -> T {
        let idx = &self.rules[j];
        if st.violated {
            return T::zero();
        }
        if st.mask == idx.full && !idx.has_negated {
            return T::one();
        }
        let r = self.spec.length.saturating_sub(prefix_len);
        match &self.heads[j] {
            Head::Exact { table, n_masks } => {
                table[(r * n_masks + st.mask as usize) * self.spec.n_events() + last.index()]
            }
            Head::Rollout => self.rollout(j, st, last, r, prefix),
        }
    }

    fn rollout(&self, j: usize, st: RuleState, last: EventId, r: usize, prefix: &[EventId]) -> T {
        let idx = &self.rules[j];
        let mut parts: Vec<u64> = vec![0x0_7AC1E, j as u64];
        parts.extend(prefix.iter().map(|e| u64::from(e.0)));
        let mut rng = seed::rng(&parts);
        let mut hits = 0usize;
        for _ in 0..ROLLOUTS {
            let mut s = st;
            let mut cur = last.index();
            for _ in 0..r {
                cur = sample(&self.spec.transitions[cur], &mut rng);
                s.push(idx, EventId::from(cur));
                if s.violated {
                    break;
                }
            }
            hits += (!s.violated && s.mask == idx.full) as usize;
        }
        T::of(hits as f64 / ROLLOUTS as f64)
    }

    fn states(&self, prefix: &[EventId]) -> Vec<RuleState> {
        let mut states = vec![RuleState::default(); self.rules.len()];
        for &e in prefix {
            for (s, idx) in states.iter_mut().zip(&self.rules) {
                s.push(idx, e);
            }
        }
        states
    }
}

fn sample<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn tabulate<T: Scalar>(trans: &[T], v: usize, idx: &RuleIndex, horizon: usize, n_masks: usize) -> Vec<T> {
    let full = idx.full as usize;
    let layer = n_masks * v;
    let mut table = vec![T::zero(); (horizon + 1) * layer];
    for last in 0..v {
        table[full * v + last] = T::one();
    }
    let mut g = vec![T::zero(); v];
    for r in 1..=horizon {
        let (done, rest) = table.split_at_mut(r * layer);
        let prev = &done[(r - 1) * layer..];
        let cur = &mut rest[..layer];
        for mask in 0..n_masks {
            let missing = (full & !mask).count_ones() as usize;
            if missing > r {
                continue;
            }
            for e in 0..v {
                g[e] = if idx.negated[e] {
                    T::zero()
                } else {
                    let m = mask | idx.mask_of(EventId::from(e)) as usize;
                    prev[m * v + e]
                };
            }
            let out = &mut cur[mask * v..(mask + 1) * v];
            for (last, slot) in out.iter_mut().enumerate() {
                let row = &trans[last * v..(last + 1) * v];
                *slot = row.iter().zip(&g).map(|(&p, &x)| p * x).sum();
            }
        }
    }
    table
}

impl<T: Scalar> ConditionalEstimator<T> for OracleEstimator<T> {
    fn n_events(&self) -> usize {
        self.spec.n_events()
    }

    fn n_labels(&self) -> usize {
        self.spec.n_labels()
    }

    fn next_event_dist(&self, prefix: &[EventId]) -> Vec<T> {
        let v = self.spec.n_events();
        let last = prefix.last().map_or(0, |e| e.index());
        self.trans[last * v..(last + 1) * v].to_vec()
    }

    fn label_posteriors(&self, prefix: &[EventId]) -> Vec<T> {
        debug_assert_eq!(prefix.first(), Some(&EventId::START));
        let last = *prefix.last().unwrap_or(&EventId::START);
        self.states(prefix)
            .into_iter()
            .enumerate()
            .map(|(j, st)| clamp_prob(self.value(j, st, last, prefix.len(), prefix), self.eps))
            .collect()
    }

    fn posterior_path_for(&self, events: &[EventId], from: usize, _key: u64, labels: &[usize]) -> Vec<Vec<T>> {
        let mut states = vec![RuleState::default(); labels.len()];
        let mut out = Vec::with_capacity(events.len().saturating_sub(from));
        for (t, &e) in events.iter().enumerate() {
            for (s, &j) in states.iter_mut().zip(labels) {
                s.push(&self.rules[j], e);
            }
            if t >= from {
                out.push(
                    states
                        .iter()
                        .zip(labels)
                        .map(|(&st, &j)| clamp_prob(self.value(j, st, e, t + 1, &events[..=t]), self.eps))
                        .collect(),
                );
            }
        }
        out
    }
}
