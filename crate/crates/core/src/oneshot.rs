//! Phase 1: per-sequence Markov-boundary extraction.
//!
//! For one sequence, the first `context` events are resampled `samples`
//! times from the estimator (top-k then nucleus filtering), the real suffix
//! is kept, and the per-label posterior is evaluated along every variant.
//! The binary KL between consecutive posteriors, averaged over variants, is
//! the CMI of the event that caused the step. Columns are thresholded per
//! label at `mean + threshold_k · std`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ConditionalEstimator;
use crate::graph::{LocalEdge, LocalGraph};
use crate::info::{binary_kl, clamp_prob, mean, neg_entropy, sample_std};
use crate::scalar::Scalar;
use crate::seed;
use crate::types::{EventId, LabelId, LabeledSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneShotConfig {
    /// Number of leading positions that are resampled (marker included).
    pub context: usize,
    /// Monte-Carlo variants per sequence.
    pub samples: usize,
    pub top_k: usize,
    pub top_p: f64,
    /// Standard deviations above the column mean for a detection.
    pub threshold_k: f64,
    pub eps: f64,
    /// Sequences are truncated to this many events.
    pub max_len: usize,
    /// CMI values below this are treated as exact zeros.
    pub min_cmi: f64,
    /// Also profile labels that are negative for the sequence. Fusion only
    /// counts positive labels, so this only adds edges to local graphs.
    pub all_labels: bool,
}

impl Default for OneShotConfig {
    fn default() -> Self {
        Self {
            context: 15,
            samples: 68,
            top_k: 35,
            top_p: 0.8,
            threshold_k: 2.75,
            eps: 1e-6,
            max_len: 192,
            min_cmi: 1e-12,
            all_labels: false,
        }
    }
}

impl OneShotConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.context < 1 || self.context >= self.max_len {
            return bad("context must satisfy 1 <= context < max_len");
        }
        if self.samples < 1 {
            return bad("samples must be at least 1");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.top_k < 1 {
            return bad("top_k must be at least 1");
        }
        if !(self.threshold_k >= 0.0) {
            return bad("threshold_k must be non-negative");
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return bad("eps must lie in (0, 0.5)");
        }
        if !(self.min_cmi >= 0.0) {
            return bad("min_cmi must be non-negative");
        }
        Ok(())
    }
}

/// Keeps the `top_k` most probable tokens, then the smallest head of them
/// whose inclusive cumulative mass stays within `top_p` (the first token is
/// always kept), and renormalises. Ties are broken by token id.
pub fn nucleus_filter<T: Scalar>(dist: &[T], top_k: usize, top_p: f64) -> Vec<(EventId, T)> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| {
        dist[b]
            .partial_cmp(&dist[a])
            .expect("finite probabilities")
            .then(a.cmp(&b))
    });
    order.truncate(top_k.max(1));
    let p = T::of(top_p);
    let mut cum = T::zero();
    let mut kept = Vec::with_capacity(order.len());
    for (rank, &tok) in order.iter().enumerate() {
        cum = cum + dist[tok];
        if rank > 0 && cum > p {
            break;
        }
        kept.push((EventId::from(tok), dist[tok]));
    }
    kept.retain(|&(_, q)| q > T::zero());
    let total: T = kept.iter().map(|&(_, q)| q).sum();
    if total > T::zero() {
        kept.iter_mut().for_each(|(_, q)| *q = *q / total);
    } else {
        kept = vec![(EventId::from(order[0]), T::one())];
    }
    kept
}

fn draw<T: Scalar, R: Rng>(filtered: &[(EventId, T)], rng: &mut R) -> EventId {
    let u = T::of(rng.random::<f64>());
    let mut acc = T::zero();
    for &(e, q) in filtered {
        acc = acc + q;
        if u < acc {
            return e;
        }
    }
    filtered.last().expect("filter keeps one token").0
}

/// `samples` copies of `events` whose positions `1..context` are redrawn
/// from the estimator's filtered next-event distribution given the original
/// prefix. Position 0 stays the marker; positions `>= context` are kept.
pub fn sample_prefixes<T: Scalar, E, R>(
    estimator: &E,
    events: &[EventId],
    cfg: &OneShotConfig,
    rng: &mut R,
) -> Vec<Vec<EventId>>
where
    E: ConditionalEstimator<T> + ?Sized,
    R: Rng,
{
    let c = cfg.context.min(events.len());
    let filters: Vec<Vec<(EventId, T)>> = (1..c)
        .map(|t| nucleus_filter(&estimator.next_event_dist(&events[..t]), cfg.top_k, cfg.top_p))
        .collect();
    (0..cfg.samples)
        .map(|_| {
            let mut v = Vec::with_capacity(events.len());
            v.push(EventId::START);
            v.extend(filters.iter().map(|f| draw(f, rng)));
            v.extend_from_slice(&events[c..]);
            v
        })
        .collect()
}

/// Per-position, per-label CMI statistics of one sequence.
///
/// Row `r` corresponds to position `i = context + r` and compares the
/// posterior after events `..=i` with the one after `..=i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CmiMatrix<T> {
    pub context: usize,
    pub rows: usize,
    /// Number of label columns.
    pub labels: usize,
    /// Label of each column.
    pub label_ids: Vec<LabelId>,
    pub cmi: Vec<T>,
    pub cs_mean: Vec<T>,
    pub cs_std: Vec<T>,
    /// Mean over variants of the pre-step posterior.
    pub ctx_mean: Vec<T>,
    /// Mean over variants of the pre-step posterior's negative entropy.
    pub ctx_negent: Vec<T>,
}

impl<T: Scalar> CmiMatrix<T> {
    pub fn empty(context: usize, label_ids: Vec<LabelId>) -> Self {
        Self {
            context,
            rows: 0,
            labels: label_ids.len(),
            label_ids,
            cmi: vec![],
            cs_mean: vec![],
            cs_std: vec![],
            ctx_mean: vec![],
            ctx_negent: vec![],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    #[inline]
    pub fn at(&self, row: usize, label: usize) -> usize {
        row * self.labels + label
    }

    pub fn column(&self, label: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.cmi[self.at(r, label)]).collect()
    }
}

/// Averages binary KL and causal-strength statistics over the variants,
/// for the label columns in `label_ids`.
pub fn cmi_profile<T: Scalar, E>(
    estimator: &E,
    variants: &[Vec<EventId>],
    cfg: &OneShotConfig,
    key: u64,
    label_ids: &[LabelId],
) -> CmiMatrix<T>
where
    E: ConditionalEstimator<T> + ?Sized,
{
    let c = cfg.context;
    let labels = label_ids.len();
    let columns: Vec<usize> = label_ids.iter().map(|l| l.index()).collect();
    let len = variants.first().map_or(0, Vec::len);
    if variants.is_empty() || len < c + 2 {
        log::warn!("sequence of length {len} is shorter than context + 2 = {}", c + 2);
        return CmiMatrix::empty(c, label_ids.to_vec());
    }
    let rows = len - 1 - c;
    let cells = rows * labels;
    let eps = T::of(cfg.eps);
    let floor = T::of(cfg.min_cmi);
    let n = variants.len();

    // samples[cell * n + v]
    let mut kl = vec![T::zero(); cells * n];
    let mut cs = vec![T::zero(); cells * n];
    let mut before = vec![T::zero(); cells * n];
    for (v, variant) in variants.iter().enumerate() {
        let path = estimator.posterior_path_for(variant, c, key, &columns);
        for (r, step) in path.windows(2).enumerate().take(rows) {
            for (j, (&a, &b)) in step[0].iter().zip(&step[1]).enumerate() {
                let p0 = clamp_prob(a, eps);
                let p1 = clamp_prob(b, eps);
                let cell = r * labels + j;
                kl[cell * n + v] = binary_kl(p1, p0);
                cs[cell * n + v] = p1 - p0;
                before[cell * n + v] = p0;
            }
        }
    }

    let mut out = CmiMatrix {
        context: c,
        rows,
        labels,
        label_ids: label_ids.to_vec(),
        cmi: Vec::with_capacity(cells),
        cs_mean: Vec::with_capacity(cells),
        cs_std: Vec::with_capacity(cells),
        ctx_mean: Vec::with_capacity(cells),
        ctx_negent: Vec::with_capacity(cells),
    };
    for cell in 0..cells {
        let span = cell * n..(cell + 1) * n;
        let m = mean(&kl[span.clone()]);
        out.cmi.push(if m < floor { T::zero() } else { m });
        out.cs_mean.push(mean(&cs[span.clone()]));
        out.cs_std.push(sample_std(&cs[span.clone()]));
        let b = &before[span];
        out.ctx_mean.push(mean(b));
        out.ctx_negent.push(b.iter().map(|&p| neg_entropy(p)).sum::<T>() / T::of_usize(n));
    }
    out
}

/// Per-label thresholds `mean + k · std` over positions and the detection mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Detections<T> {
    pub thresholds: Vec<T>,
    /// Row-major like [`CmiMatrix::cmi`].
    pub mask: Vec<bool>,
}

pub fn dynamic_threshold<T: Scalar>(matrix: &CmiMatrix<T>, threshold_k: f64) -> Detections<T> {
    let k = T::of(threshold_k);
    let thresholds: Vec<T> = (0..matrix.labels)
        .map(|j| {
            let col = matrix.column(j);
            mean(&col) + k * sample_std(&col)
        })
        .collect();
    let mask = (0..matrix.rows * matrix.labels)
        .map(|cell| matrix.cmi[cell] >= thresholds[cell % matrix.labels])
        .collect();
    Detections { thresholds, mask }
}

/// Runs sampling, CMI profiling and thresholding on one sequence.
///
/// Returns `None` when the (truncated) sequence is shorter than
/// `context + 2`. A detection at row position `i` is attributed to the event
/// at `i + 1`; repeated events keep their highest-CMI occurrence.
pub fn discover_sequence<T: Scalar, E>(
    estimator: &E,
    sequence: &LabeledSequence,
    cfg: &OneShotConfig,
    seed: u64,
) -> Option<LocalGraph<T>>
where
    E: ConditionalEstimator<T> + ?Sized,
{
    let mut events = sequence.event_ids();
    events.truncate(cfg.max_len);
    if events.len() < cfg.context + 2 {
        return None;
    }
    let key = seed::key_of(&sequence.id);
    let mut rng = seed::rng(&[seed, key]);
    let variants = sample_prefixes(estimator, &events, cfg, &mut rng);
    let positive = sequence.positive_labels();
    let label_ids: Vec<LabelId> = if cfg.all_labels {
        (0..estimator.n_labels()).map(LabelId::from).collect()
    } else {
        positive.clone()
    };
    let matrix = cmi_profile(estimator, &variants, cfg, key, &label_ids);
    let det = dynamic_threshold(&matrix, cfg.threshold_k);

    let mut best: BTreeMap<(LabelId, EventId), LocalEdge<T>> = BTreeMap::new();
    for r in 0..matrix.rows {
        for j in 0..matrix.labels {
            let cell = matrix.at(r, j);
            if !det.mask[cell] || matrix.cmi[cell] <= T::zero() {
                continue;
            }
            let position = matrix.context + r;
            let edge = LocalEdge {
                label: matrix.label_ids[j],
                event: events[position + 1],
                position,
                cmi: matrix.cmi[cell],
                cs_mean: matrix.cs_mean[cell],
                cs_std: matrix.cs_std[cell],
                ctx_mean: matrix.ctx_mean[cell],
                ctx_negent: matrix.ctx_negent[cell],
            };
            best.entry((edge.label, edge.event))
                .and_modify(|cur| {
                    if edge.cmi > cur.cmi {
                        *cur = edge.clone();
                    }
                })
                .or_insert(edge);
        }
    }
    let mut edges: Vec<LocalEdge<T>> = best.into_values().collect();
    edges.sort_by_key(|e| (e.label, e.position));
    Some(LocalGraph {
        sequence_id: sequence.id.clone(),
        labels: positive,
        edges,
    })
}

/// Phase-1 output for a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Discovery<T> {
    /// In input order, one per processed sequence.
    pub graphs: Vec<LocalGraph<T>>,
    pub skipped: usize,
}

/// Parallel [`discover_sequence`] over a corpus on `workers` threads.
/// The result does not depend on `workers`.
pub fn discover_batch<T: Scalar, E>(
    estimator: &E,
    sequences: &[LabeledSequence],
    cfg: &OneShotConfig,
    seed: u64,
    workers: usize,
) -> Result<Discovery<T>>
where
    E: ConditionalEstimator<T> + ?Sized,
{
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let results: Vec<Option<LocalGraph<T>>> = pool.install(|| {
        sequences
            .par_iter()
            .map(|s| discover_sequence(estimator, s, cfg, seed))
            .collect()
    });
    let skipped = results.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("skipped {skipped} sequences shorter than context + 2");
    }
    Ok(Discovery {
        graphs: results.into_iter().flatten().collect(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{NoiseConfig, NoisyEstimator, OracleEstimator};
    use crate::synthgen::{generate, preset, GeneratorSpec, Rule};
    use crate::types::{EventVocab, LabelVocab};

    fn matrix_from_column(col: &[f64]) -> CmiMatrix<f64> {
        CmiMatrix {
            context: 0,
            rows: col.len(),
            labels: 1,
            label_ids: vec![LabelId(0)],
            cmi: col.to_vec(),
            cs_mean: vec![0.0; col.len()],
            cs_std: vec![0.0; col.len()],
            ctx_mean: vec![0.5; col.len()],
            ctx_negent: vec![0.0; col.len()],
        }
    }

    #[test]
    fn equal_columns_pass_everywhere() {
        let d = dynamic_threshold(&matrix_from_column(&[0.3; 6]), 2.75);
        assert!(d.mask.iter().all(|&m| m));
    }

    #[test]
    fn threshold_uses_sample_std() {
        let m = matrix_from_column(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        let d = dynamic_threshold(&m, 2.75);
        assert!((d.thresholds[0] - 1.429_837_387_624_884).abs() < 1e-9);
        assert!(d.mask.iter().all(|&x| !x));
        let d = dynamic_threshold(&m, 1.0);
        assert!((d.thresholds[0] - 0.647_213_595_499_958).abs() < 1e-12);
        assert_eq!(d.mask, vec![false, false, false, false, true]);
    }

    #[test]
    fn zero_k_keeps_everything_above_the_mean() {
        let col = [0.1, 0.5, 0.2, 0.05, 0.3];
        let d = dynamic_threshold(&matrix_from_column(&col), 0.0);
        let mu = col.iter().sum::<f64>() / 5.0;
        for (x, m) in col.iter().zip(&d.mask) {
            assert_eq!(*m, *x >= mu);
        }
        assert!(d.mask.iter().any(|&m| m));
    }

    #[test]
    fn single_position_has_zero_spread() {
        let d = dynamic_threshold(&matrix_from_column(&[0.4]), 2.75);
        assert_eq!(d.thresholds, vec![0.4]);
        assert_eq!(d.mask, vec![true]);
    }

    #[test]
    fn filter_keeps_deterministic_token() {
        let f = nucleus_filter(&[0.0, 0.0, 1.0, 0.0], 35, 0.8);
        assert_eq!(f, vec![(EventId(2), 1.0)]);
    }

    #[test]
    fn tiny_top_p_keeps_only_the_mode() {
        let f = nucleus_filter(&[0.0, 0.3, 0.45, 0.25], 35, 1e-9);
        assert_eq!(f, vec![(EventId(2), 1.0)]);
    }

    #[test]
    fn nucleus_drops_the_crossing_token() {
        let third = 1.0 / 3.0;
        let f = nucleus_filter(&[0.0, third, third, third], 35, 0.8);
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|&(_, q): &(EventId, f64)| (q - 0.5).abs() < 1e-12));
    }

    #[test]
    fn uniform_fifty_keeps_top_thirty_five() {
        // Independent check: 35 of 50 equiprobable tokens hold 0.7 < 0.8 of
        // the mass, so only top-k truncates; sampling should be uniform on them.
        let dist = vec![0.02f64; 50];
        let f = nucleus_filter(&dist, 35, 0.8);
        assert_eq!(f.len(), 35);
        let mut rng = seed::rng(&[1]);
        let draws = 100_000;
        let mut counts = vec![0usize; 50];
        for _ in 0..draws {
            counts[draw(&f, &mut rng).index()] += 1;
        }
        assert!(counts[35..].iter().all(|&c| c == 0));
        let expected = draws as f64 / 35.0;
        let chi2: f64 = counts[..35]
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9th percentile of chi-squared with 34 degrees of freedom.
        assert!(chi2 < 65.25, "chi2 {chi2}");
    }

    #[test]
    fn variants_keep_marker_and_suffix() {
        let spec = preset("tiny").unwrap();
        let o = OracleEstimator::<f64>::new(&spec).unwrap();
        let cfg = OneShotConfig {
            context: 3,
            samples: 20,
            ..Default::default()
        };
        let events: Vec<EventId> = [0, 1, 2, 3, 1, 2].iter().map(|&e| EventId(e)).collect();
        let vs = sample_prefixes(&o, &events, &cfg, &mut seed::rng(&[4]));
        assert_eq!(vs.len(), 20);
        for v in &vs {
            assert_eq!(v[0], EventId::START);
            assert_eq!(&v[3..], &events[3..]);
            assert!(v[1..3].iter().all(|e| e.index() > 0));
        }
    }

    #[test]
    fn identical_posteriors_give_zero_cmi() {
        struct Flat;
        impl ConditionalEstimator<f64> for Flat {
            fn n_events(&self) -> usize {
                3
            }
            fn n_labels(&self) -> usize {
                2
            }
            fn next_event_dist(&self, _: &[EventId]) -> Vec<f64> {
                vec![0.0, 0.5, 0.5]
            }
            fn label_posteriors(&self, _: &[EventId]) -> Vec<f64> {
                vec![0.3, 0.8]
            }
        }
        let cfg = OneShotConfig {
            context: 2,
            samples: 5,
            ..Default::default()
        };
        let events: Vec<EventId> = [0, 1, 2, 1, 1, 2].iter().map(|&e| EventId(e)).collect();
        let vs = sample_prefixes(&Flat, &events, &cfg, &mut seed::rng(&[0]));
        let m = cmi_profile(&Flat, &vs, &cfg, 0, &[LabelId(0)]);
        assert_eq!(m.rows, 3);
        assert!(m.cmi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_sample_binary_kl() {
        struct Step;
        impl ConditionalEstimator<f64> for Step {
            fn n_events(&self) -> usize {
                3
            }
            fn n_labels(&self) -> usize {
                1
            }
            fn next_event_dist(&self, _: &[EventId]) -> Vec<f64> {
                vec![0.0, 1.0, 0.0]
            }
            fn label_posteriors(&self, p: &[EventId]) -> Vec<f64> {
                vec![if p.len() > 2 { 0.9 } else { 0.5 }]
            }
        }
        let cfg = OneShotConfig {
            context: 1,
            samples: 1,
            ..Default::default()
        };
        let vs = vec![vec![EventId(0), EventId(1), EventId(2)]];
        let m = cmi_profile(&Step, &vs, &cfg, 0, &[LabelId(0)]);
        assert_eq!(m.rows, 1);
        let expected = 0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln();
        assert!((m.cmi[0] - expected).abs() < 1e-12);
        assert!((m.cmi[0] - 0.36806).abs() < 1e-5);
    }

    #[test]
    fn short_sequences_are_skipped() {
        let spec = preset("tiny").unwrap();
        let o = OracleEstimator::<f64>::new(&spec).unwrap();
        let cfg = OneShotConfig {
            context: 5,
            ..Default::default()
        };
        let s = LabeledSequence::new(
            "short",
            (0..6).map(|k| (EventId(if k == 0 { 0 } else { 1 }), k as f64)).collect(),
            vec![false],
        )
        .unwrap();
        assert!(discover_sequence::<f64, _>(&o, &s, &cfg, 0).is_none());
        let vs = vec![s.event_ids()];
        assert!(cmi_profile::<f64, _>(&o, &vs, &cfg, 0, &[LabelId(0)]).is_empty());
    }

    // Nucleus filtering keeps only x3 in the context, so every variant shares
    // the same prefix and literal arrivals are the only large posterior jumps.
    fn world(rules: &[&str], length: usize) -> GeneratorSpec {
        let events = EventVocab::synthetic(6);
        let row = vec![0.0, 0.025, 0.025, 0.5, 0.35, 0.1];
        GeneratorSpec {
            rules: rules.iter().map(|r| Rule::parse(r, &events).unwrap()).collect(),
            events,
            labels: LabelVocab::synthetic(rules.len()),
            transitions: vec![row; 6],
            length,
            zipf: None,
            seed: 0,
        }
    }

    fn sequence(id: &str, ev: &[u32], labels: Vec<bool>) -> LabeledSequence {
        let events = ev.iter().enumerate().map(|(k, &e)| (EventId(e), k as f64)).collect();
        LabeledSequence::new(id, events, labels).unwrap()
    }

    #[test]
    fn oracle_detects_first_occurrences_of_literals() {
        let spec = world(&["x1", "x2"], 24);
        let o = OracleEstimator::<f64>::new(&spec).unwrap();
        let cfg = OneShotConfig {
            context: 3,
            samples: 16,
            ..Default::default()
        };
        let mut ev = vec![3u32; 24];
        ev[0] = 0;
        ev[8] = 1;
        ev[15] = 2;
        ev[18] = 1;
        ev[20] = 4;
        let s = sequence("a", &ev, vec![true, true]);
        let g = discover_sequence::<f64, _>(&o, &s, &cfg, 9).unwrap();
        assert!(g.check_invariants(cfg.context, ev.len()));
        assert_eq!(g.edges.len(), 2, "{g:?}");
        assert_eq!((g.edges[0].label, g.edges[0].event, g.edges[0].position), (LabelId(0), EventId(1), 7));
        assert_eq!((g.edges[1].label, g.edges[1].event, g.edges[1].position), (LabelId(1), EventId(2), 14));
        assert!(g.edges.iter().all(|e| e.cs_mean > 0.0));
    }

    #[test]
    fn repeated_literal_is_inert() {
        let spec = world(&["x1"], 16);
        let o = OracleEstimator::<f64>::new(&spec).unwrap();
        let cfg = OneShotConfig {
            context: 3,
            samples: 4,
            ..Default::default()
        };
        let mut ev = [3u32; 16];
        ev[0] = 0;
        ev[6] = 1;
        ev[10] = 1;
        let vs = sample_prefixes(&o, &ev.iter().map(|&e| EventId(e)).collect::<Vec<_>>(), &cfg, &mut seed::rng(&[2]));
        let m: CmiMatrix<f64> = cmi_profile(&o, &vs, &cfg, 0, &[LabelId(0)]);
        assert!(m.cmi[m.at(5 - cfg.context, 0)] > 1.0);
        for i in 6..15 {
            assert_eq!(m.cmi[m.at(i - cfg.context, 0)], 0.0, "position {i}");
        }
    }

    #[test]
    fn nothing_moves_after_a_violation() {
        let spec = world(&["x1 & !x5"], 16);
        let o = OracleEstimator::<f64>::new(&spec).unwrap();
        let cfg = OneShotConfig {
            context: 3,
            samples: 4,
            ..Default::default()
        };
        let mut ev = [3u32; 16];
        ev[0] = 0;
        ev[6] = 5;
        ev[10] = 1;
        let s = sequence("v", &ev, vec![false]);
        let g = discover_sequence::<f64, _>(&o, &s, &cfg, 1).unwrap();
        assert!(!g.parents(LabelId(0)).contains(&EventId(1)), "{g:?}");
        assert!(g.edges.iter().all(|e| e.position < 6));
    }

    #[test]
    fn full_miss_rate_gives_empty_graphs() {
        let spec = preset("tiny").unwrap();
        let o = OracleEstimator::<f64>::new(&spec).unwrap();
        let noisy = NoisyEstimator::new(o, NoiseConfig::new(0.0, 1.0, 3)).unwrap();
        let (seqs, _) = generate(&spec, 200).unwrap();
        let cfg = OneShotConfig {
            context: 2,
            samples: 16,
            ..Default::default()
        };
        let d = discover_batch::<f64, _>(&noisy, &seqs, &cfg, 5, 2).unwrap();
        assert_eq!(d.graphs.len(), 200);
        assert!(d.graphs.iter().all(LocalGraph::is_empty));
    }

    #[test]
    fn batch_is_independent_of_worker_count() {
        let spec = preset("tiny").unwrap();
        let o = OracleEstimator::<f64>::new(&spec).unwrap();
        let (seqs, _) = generate(&spec, 300).unwrap();
        let cfg = OneShotConfig {
            context: 2,
            samples: 16,
            ..Default::default()
        };
        let a = discover_batch::<f64, _>(&o, &seqs, &cfg, 42, 1).unwrap();
        let b = discover_batch::<f64, _>(&o, &seqs, &cfg, 42, 4).unwrap();
        assert_eq!(a, b);
        let again = discover_sequence::<f64, _>(&o, &seqs[7], &cfg, 42);
        assert_eq!(again.as_ref(), a.graphs.get(7));
    }

    #[test]
    fn config_validation() {
        assert!(OneShotConfig::default().validate().is_ok());
        for bad in [
            OneShotConfig { context: 0, ..Default::default() },
            OneShotConfig { samples: 0, ..Default::default() },
            OneShotConfig { top_p: 0.0, ..Default::default() },
            OneShotConfig { top_k: 0, ..Default::default() },
            OneShotConfig { threshold_k: -1.0, ..Default::default() },
            OneShotConfig { context: 192, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
