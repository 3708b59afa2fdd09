//! Synthetic multi-label event-sequence worlds with known Markov boundaries.
//!
//! Events follow a first-order Markov chain that starts from the marker row.
//! Each label is a conjunction over event *presence*: every positive literal
//! must occur somewhere after the marker and no negated literal may occur.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::GroundTruth;
use crate::seed;
use crate::types::{EventId, EventVocab, LabelVocab, LabeledSequence};

/// Conjunction of presence literals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub positive: Vec<EventId>,
    #[serde(default)]
    pub negated: Vec<EventId>,
}

impl Rule {
    pub fn new(positive: Vec<EventId>, negated: Vec<EventId>) -> Self {
        Self { positive, negated }
    }

    /// Parses `x1 & x5 & !x10` against an event vocabulary.
    pub fn parse(text: &str, events: &EventVocab) -> Result<Self> {
        let mut rule = Rule::new(vec![], vec![]);
        for lit in text.split('&').map(str::trim) {
            let (neg, name) = match lit.strip_prefix('!') {
                Some(rest) => (true, rest.trim()),
                None => (false, lit),
            };
            let id = events
                .id(name)
                .ok_or_else(|| Error::UnknownName(name.to_string()))?;
            if neg {
                rule.negated.push(id);
            } else {
                rule.positive.push(id);
            }
        }
        Ok(rule)
    }

    /// Evaluates the rule on an event-presence mask.
    pub fn holds(&self, present: &[bool]) -> bool {
        self.positive.iter().all(|e| present[e.index()])
            && !self.negated.iter().any(|e| present[e.index()])
    }

    /// All literal events: the label's ground-truth Markov boundary.
    pub fn literals(&self) -> BTreeSet<EventId> {
        self.positive.iter().chain(&self.negated).copied().collect()
    }

    fn validate(&self, n_events: usize) -> Result<()> {
        if self.positive.is_empty() {
            return Err(Error::InvalidSpec(format!("rule `{self}` has no positive literal")));
        }
        let mut seen = BTreeSet::new();
        for &e in self.positive.iter().chain(&self.negated) {
            if e == EventId::START || e.index() >= n_events {
                return Err(Error::InvalidSpec(format!("rule literal {e} is not an emittable event")));
            }
            if !seen.insert(e) {
                let contradiction = self.positive.contains(&e) && self.negated.contains(&e);
                return Err(Error::InvalidSpec(if contradiction {
                    format!("rule `{self}` is contradictory on {e}")
                } else {
                    format!("rule `{self}` repeats {e}")
                }));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lits: Vec<String> = self
            .positive
            .iter()
            .map(|e| e.to_string())
            .chain(self.negated.iter().map(|e| format!("!{e}")))
            .collect();
        f.write_str(&lits.join(" & "))
    }
}

/// A fully specified synthetic world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub events: EventVocab,
    pub labels: LabelVocab,
    /// Row-stochastic, `events.len()` square; row 0 is the initial
    /// distribution and column 0 is never emitted.
    pub transitions: Vec<Vec<f64>>,
    /// Sequence length including the start marker.
    pub length: usize,
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub zipf: Option<f64>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let v = self.events.len();
        if v < 2 {
            return Err(Error::InvalidSpec("event vocabulary needs at least one emittable event".into()));
        }
        if self.length < 1 {
            return Err(Error::InvalidSpec("sequence length must be at least 1".into()));
        }
        if self.transitions.len() != v {
            return Err(Error::InvalidSpec(format!(
                "transition matrix has {} rows, expected {v}",
                self.transitions.len()
            )));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != v {
                return Err(Error::InvalidSpec(format!("transition row {i} has length {}", row.len())));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidSpec(format!("transition row {i} has a negative entry")));
            }
            if row[0] != 0.0 {
                return Err(Error::InvalidSpec(format!("transition row {i} emits the start marker")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!("transition row {i} sums to {sum}")));
            }
        }
        if self.rules.len() != self.labels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} rules for {} labels",
                self.rules.len(),
                self.labels.len()
            )));
        }
        for r in &self.rules {
            r.validate(v)?;
        }
        Ok(())
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        self.rules.iter().map(Rule::literals).collect()
    }

    /// Samples the event trajectory (marker included) of one sequence.
    pub fn sample_events<R: Rng>(&self, rng: &mut R) -> Vec<EventId> {
        let mut out = Vec::with_capacity(self.length);
        out.push(EventId::START);
        let mut last = 0usize;
        for _ in 1..self.length {
            last = sample_row(&self.transitions[last], rng);
            out.push(EventId::from(last));
        }
        out
    }

    /// Label vector implied by an event trajectory.
    pub fn label_events(&self, events: &[EventId]) -> Vec<bool> {
        let mut present = vec![false; self.n_events()];
        for e in events.iter().skip(1) {
            present[e.index()] = true;
        }
        self.rules.iter().map(|r| r.holds(&present)).collect()
    }
}

fn sample_row<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws `m` sequences with the spec's own seed.
pub fn generate(spec: &GeneratorSpec, m: usize) -> Result<(Vec<LabeledSequence>, GroundTruth)> {
    generate_with_seed(spec, m, spec.seed)
}

pub fn generate_with_seed(
    spec: &GeneratorSpec,
    m: usize,
    corpus_seed: u64,
) -> Result<(Vec<LabeledSequence>, GroundTruth)> {
    spec.validate()?;
    if m == 0 {
        return Err(Error::InvalidConfig("generate needs m >= 1".into()));
    }
    let sequences = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::rng(&[corpus_seed, 0x6E6, k as u64]);
            let events = spec.sample_events(&mut rng);
            let labels = spec.label_events(&events);
            let mut t = 0.0;
            let timed = events
                .into_iter()
                .enumerate()
                .map(|(pos, e)| {
                    if pos > 0 {
                        let gap: f64 = Exp1.sample(&mut rng);
                        t += gap;
                    }
                    (e, t)
                })
                .collect();
            LabeledSequence {
                id: format!("s{k:06}"),
                events: timed,
                labels,
            }
        })
        .collect();
    Ok((sequences, spec.ground_truth()))
}

/// Knobs for randomly constructed worlds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    /// Event vocabulary size including the start marker.
    pub vocab: usize,
    pub length: usize,
    pub labels: usize,
    pub min_literals: usize,
    pub max_literals: usize,
    /// Number of events that rule literals are drawn from.
    pub pool: usize,
    /// Per-step probability mass carried by the pool.
    pub pool_mass: f64,
    /// Zipf exponent over pool popularity. When set, every rule gets one
    /// trigger literal from the pool, spread evenly over popularity ranks so
    /// labels run head → tail, and its other literals from the common events.
    pub zipf: Option<f64>,
    /// Frequent events shared by many rules (Zipf worlds only).
    #[serde(default)]
    pub common: usize,
    /// Per-step probability mass carried by the common events.
    #[serde(default)]
    pub common_mass: f64,
    /// Weight of the sparse successor structure mixed into every row.
    pub markov: f64,
    /// Probability that a non-first literal is a negated background event.
    pub negated_prob: f64,
    pub seed: u64,
}

impl WorldParams {
    pub fn build(&self) -> Result<GeneratorSpec> {
        let v = self.vocab;
        let others = if self.zipf.is_some() { self.common } else { self.pool };
        let inconsistent = self.common + self.pool + 1 >= v
            || others + usize::from(self.zipf.is_some()) < self.max_literals
            || self.min_literals == 0
            || self.min_literals > self.max_literals
            || self.pool_mass + self.common_mass >= 1.0;
        if inconsistent {
            return Err(Error::InvalidSpec("inconsistent world parameters".into()));
        }
        let mut rng = seed::rng(&[self.seed, 0x3071D]);

        // Ids: common events, then the pool ranked by popularity, then background.
        let first_pool = self.common + 1;
        let first_background = first_pool + self.pool;
        let weights: Vec<f64> = (1..=self.pool)
            .map(|k| self.zipf.map_or(1.0, |s| (k as f64).powf(-s)))
            .collect();
        let wsum: f64 = weights.iter().sum();
        let background = v - first_background;
        let mut base = vec![0.0; v];
        for p in &mut base[1..first_pool] {
            *p = self.common_mass / self.common as f64;
        }
        for (k, w) in weights.iter().enumerate() {
            base[first_pool + k] = self.pool_mass * w / wsum;
        }
        for p in &mut base[first_background..] {
            *p = (1.0 - self.pool_mass - self.common_mass) / background as f64;
        }

        let mut transitions = Vec::with_capacity(v);
        transitions.push(normalise(base.clone()));
        for _ in 1..v {
            let succ = first_background + rng.random_range(0..background);
            let mut row: Vec<f64> = base.iter().map(|p| p * (1.0 - self.markov)).collect();
            row[succ] += self.markov;
            transitions.push(normalise(row));
        }

        let n = self.labels;
        let rules = (0..n)
            .map(|r| {
                let k = rng.random_range(self.min_literals..=self.max_literals);
                let (mut chosen, mut candidates): (Vec<usize>, Vec<usize>) = match self.zipf {
                    None => (vec![], (first_pool..first_background).collect()),
                    Some(_) => {
                        let rank = if n > 1 { r * (self.pool - 1) / (n - 1) } else { 0 };
                        (vec![first_pool + rank], (1..first_pool).collect())
                    }
                };
                while chosen.len() < k && !candidates.is_empty() {
                    chosen.push(candidates.swap_remove(rng.random_range(0..candidates.len())));
                }
                chosen.sort_unstable();
                let mut positive = Vec::new();
                let mut negated = Vec::new();
                for (i, e) in chosen.into_iter().enumerate() {
                    if i > 0 && rng.random::<f64>() < self.negated_prob {
                        negated.push(EventId::from(first_background + rng.random_range(0..background)));
                    } else {
                        positive.push(EventId::from(e));
                    }
                }
                negated.sort_unstable();
                negated.dedup();
                Rule::new(positive, negated)
            })
            .collect();

        let spec = GeneratorSpec {
            events: EventVocab::synthetic(v),
            labels: LabelVocab::synthetic(n),
            transitions,
            length: self.length,
            rules,
            zipf: self.zipf,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Rescales a row to sum to one, folding the rounding residue into its
/// largest entry so the sum is exact to the last ulp or two.
fn normalise(mut row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= s);
    let residue = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row
        .iter_mut()
        .max_by(|a, b| a.partial_cmp(b).expect("finite"))
    {
        *max += residue;
    }
    row
}

pub const PRESETS: [&str; 3] = ["tiny", "standard", "longtail"];

pub fn standard_params() -> WorldParams {
    WorldParams {
        vocab: 200,
        length: 50,
        labels: 20,
        min_literals: 3,
        max_literals: 8,
        pool: 30,
        pool_mass: 0.75,
        zipf: None,
        markov: 0.1,
        negated_prob: 0.0,
        common: 0,
        common_mass: 0.0,
        seed: 20_240_611,
    }
}

pub fn longtail_params() -> WorldParams {
    WorldParams {
        pool: 150,
        pool_mass: 0.12,
        zipf: Some(1.2),
        common: 10,
        common_mass: 0.35,
        ..standard_params()
    }
}

/// Named worlds: `tiny` (enumerable), `standard`, `longtail`.
pub fn preset(name: &str) -> Result<GeneratorSpec> {
    match name {
        "tiny" => {
            let events = EventVocab::synthetic(4);
            let spec = GeneratorSpec {
                rules: vec![Rule::parse("x1 & x2", &events)?],
                events,
                labels: LabelVocab::synthetic(1),
                transitions: vec![
                    vec![0.0, 0.5, 0.3, 0.2],
                    vec![0.0, 0.2, 0.5, 0.3],
                    vec![0.0, 0.4, 0.2, 0.4],
                    vec![0.0, 0.3, 0.3, 0.4],
                ],
                length: 6,
                zipf: None,
                seed: 7,
            };
            spec.validate()?;
            Ok(spec)
        }
        "standard" => standard_params().build(),
        "longtail" => longtail_params().build(),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_rule_world(rule: &str, rows: Vec<Vec<f64>>) -> Result<GeneratorSpec> {
        let events = EventVocab::synthetic(rows.len());
        let spec = GeneratorSpec {
            rules: vec![Rule::parse(rule, &events)?],
            events,
            labels: LabelVocab::synthetic(1),
            transitions: rows,
            length: 5,
            zipf: None,
            seed: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    #[test]
    fn chain_that_always_emits_the_literal_labels_everything() {
        let spec = single_rule_world("x1", vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let (seqs, truth) = generate(&spec, 50).unwrap();
        assert!(seqs.iter().all(|s| s.labels == vec![true]));
        assert_eq!(truth[0], [EventId(1)].into_iter().collect());
    }

    #[test]
    fn contradictory_rule_is_rejected() {
        let rows = vec![vec![0.0, 0.5, 0.5]; 3];
        assert!(matches!(
            single_rule_world("x1 & !x1", rows),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn rows_must_be_stochastic() {
        let rows = vec![vec![0.0, 0.5, 0.4]; 3];
        assert!(single_rule_world("x1", rows).is_err());
    }

    #[test]
    fn ground_truth_contains_negated_literals() {
        let rows = vec![vec![0.0, 0.5, 0.25, 0.25]; 4];
        let spec = single_rule_world("x1 & !x3", rows).unwrap();
        assert_eq!(spec.ground_truth()[0], [EventId(1), EventId(3)].into_iter().collect());
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = preset("tiny").unwrap();
        let a = generate(&spec, 200).unwrap();
        let b = generate(&spec, 200).unwrap();
        assert_eq!(a, b);
        let c = generate_with_seed(&spec, 200, 99).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn generated_sequences_are_valid() {
        let spec = preset("tiny").unwrap();
        let (seqs, _) = generate(&spec, 100).unwrap();
        for s in &seqs {
            s.validate(spec.n_events(), spec.n_labels()).unwrap();
            assert_eq!(s.len(), spec.length);
            assert_eq!(s.labels, spec.label_events(&s.event_ids()));
        }
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(preset("huge"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn tiny_preset_is_enumerable() {
        let spec = preset("tiny").unwrap();
        let suffixes = (spec.n_events() as u64).pow(spec.length as u32 - 1);
        assert!(suffixes <= 4u64.pow(5));
    }

    #[test]
    fn standard_rules_are_satisfiable() {
        let spec = preset("standard").unwrap();
        assert_eq!(spec.n_events(), 200);
        assert_eq!(spec.length, 50);
        assert_eq!(spec.n_labels(), 20);
        let mut hits = vec![0usize; spec.n_labels()];
        let mut rng = seed::rng(&[3]);
        for _ in 0..10_000 {
            let ev = spec.sample_events(&mut rng);
            for (j, y) in spec.label_events(&ev).into_iter().enumerate() {
                hits[j] += y as usize;
            }
        }
        for (j, r) in spec.rules.iter().enumerate() {
            assert!((3..=8).contains(&r.literals().len()));
            assert!(hits[j] > 0, "label {j} never satisfied");
        }
    }

    #[test]
    fn zipf_supports_span_two_orders_of_magnitude() {
        let spec = WorldParams {
            zipf: Some(1.2),
            ..longtail_params()
        }
        .build()
        .unwrap();
        let (seqs, _) = generate(&spec, 5000).unwrap();
        let mut support = vec![0usize; spec.n_labels()];
        for s in &seqs {
            for l in s.positive_labels() {
                support[l.index()] += 1;
            }
        }
        let max = *support.iter().max().unwrap() as f64;
        let min_nonzero = support.iter().filter(|&&c| c > 0).min().copied().unwrap_or(1) as f64;
        assert!(max / min_nonzero >= 100.0, "supports {support:?}");
    }
}
