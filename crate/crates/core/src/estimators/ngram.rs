//! Count-based estimator: smoothed back-off n-gram over events plus a
//! naive-Bayes label head on event-presence features.

use std::collections::HashMap;

use super::{sigmoid, ConditionalEstimator};
use crate::error::{Error, Result};
use crate::info::{clamp_prob, EPS};
use crate::scalar::Scalar;
use crate::types::{EventId, LabeledSequence};

#[derive(Default)]
struct ContextCounts {
    next: HashMap<u32, u32>,
    total: u32,
}

pub struct NGramEstimator<T> {
    order: usize,
    delta: T,
    n_events: usize,
    /// `tables[h - 1]` maps length-`h` contexts to next-event counts.
    tables: Vec<HashMap<Vec<EventId>, ContextCounts>>,
    prior_logit: Vec<T>,
    /// `weights[j][e]`: log-likelihood ratio of event `e` being present.
    weights: Vec<Vec<T>>,
    eps: T,
}

impl<T: Scalar> NGramEstimator<T> {
    pub fn fit(corpus: &[LabeledSequence], n_events: usize, n_labels: usize, order: usize, delta: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidConfig("n-gram corpus is empty".into()));
        }
        if order == 0 {
            return Err(Error::InvalidConfig("n-gram order must be at least 1".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidConfig("n-gram smoothing delta must be positive".into()));
        }
        let shortest = corpus.iter().map(LabeledSequence::len).min().unwrap_or(0);
        if order > shortest {
            return Err(Error::InvalidConfig(format!(
                "n-gram order {order} exceeds the shortest sequence ({shortest} events)"
            )));
        }

        let mut tables: Vec<HashMap<Vec<EventId>, ContextCounts>> = (0..order).map(|_| HashMap::new()).collect();
        let mut pos = vec![0u32; n_labels];
        let mut with_event = vec![vec![[0u32; 2]; n_events]; n_labels];
        for s in corpus {
            s.validate(n_events, n_labels)?;
            let ev = s.event_ids();
            for t in 1..ev.len() {
                for h in 1..=order.min(t) {
                    let c = tables[h - 1].entry(ev[t - h..t].to_vec()).or_default();
                    *c.next.entry(ev[t].0).or_default() += 1;
                    c.total += 1;
                }
            }
            let mut present = vec![false; n_events];
            for e in &ev[1..] {
                present[e.index()] = true;
            }
            for (j, &y) in s.labels.iter().enumerate() {
                pos[j] += y as u32;
                for (e, &here) in present.iter().enumerate() {
                    with_event[j][e][y as usize] += here as u32;
                }
            }
        }

        let m = corpus.len() as f64;
        let mut prior_logit = Vec::with_capacity(n_labels);
        let mut weights = Vec::with_capacity(n_labels);
        for j in 0..n_labels {
            let n1 = pos[j] as f64;
            let n0 = m - n1;
            prior_logit.push(T::of(((n1 + 1.0) / (n0 + 1.0)).ln()));
            weights.push(
                with_event[j]
                    .iter()
                    .map(|&[c0, c1]| {
                        let p1 = (c1 as f64 + 1.0) / (n1 + 2.0);
                        let p0 = (c0 as f64 + 1.0) / (n0 + 2.0);
                        T::of((p1 / p0).ln())
                    })
                    .collect(),
            );
        }

        Ok(Self {
            order,
            delta: T::of(delta),
            n_events,
            tables,
            prior_logit,
            weights,
            eps: T::of(EPS),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

impl<T: Scalar> ConditionalEstimator<T> for NGramEstimator<T> {
    fn n_events(&self) -> usize {
        self.n_events
    }

    fn n_labels(&self) -> usize {
        self.prior_logit.len()
    }

    fn next_event_dist(&self, prefix: &[EventId]) -> Vec<T> {
        let emit = T::of_usize(self.n_events - 1);
        let longest = self.order.min(prefix.len());
        let counts = (1..=longest)
            .rev()
            .find_map(|h| self.tables[h - 1].get(&prefix[prefix.len() - h..]));
        let mut dist = vec![T::zero(); self.n_events];
        let total = counts.map_or(T::zero(), |c| T::of(c.total as f64));
        let denom = total + self.delta * emit;
        for (e, slot) in dist.iter_mut().enumerate().skip(1) {
            let c = counts
                .and_then(|c| c.next.get(&(e as u32)))
                .map_or(T::zero(), |&c| T::of(c as f64));
            *slot = (c + self.delta) / denom;
        }
        dist
    }

    fn label_posteriors(&self, prefix: &[EventId]) -> Vec<T> {
        let mut present = vec![false; self.n_events];
        for e in prefix.iter().skip(1) {
            present[e.index()] = true;
        }
        self.weights
            .iter()
            .zip(&self.prior_logit)
            .map(|(w, &prior)| {
                let score = present
                    .iter()
                    .zip(w)
                    .filter(|(&p, _)| p)
                    .fold(prior, |acc, (_, &x)| acc + x);
                clamp_prob(sigmoid(score), self.eps)
            })
            .collect()
    }

    fn posterior_path_for(&self, events: &[EventId], from: usize, _key: u64, labels: &[usize]) -> Vec<Vec<T>> {
        let mut present = vec![false; self.n_events];
        let mut score = self.prior_logit.clone();
        let mut out = Vec::with_capacity(events.len().saturating_sub(from));
        for (t, &e) in events.iter().enumerate() {
            if t > 0 && !present[e.index()] {
                present[e.index()] = true;
                for (s, w) in score.iter_mut().zip(&self.weights) {
                    *s = *s + w[e.index()];
                }
            }
            if t >= from {
                out.push(labels.iter().map(|&j| clamp_prob(sigmoid(score[j]), self.eps)).collect());
            }
        }
        out
    }
}
