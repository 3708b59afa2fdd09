//! Imperfect-estimator simulation at the posterior level.
//!
//! Every step where the inner label posterior moves is a candidate
//! detection; with probability `beta` the move is cancelled (the posterior
//! stays where it was, and later steps keep the same log-odds offset so the
//! jump never re-appears). Independently, with probability `alpha` per
//! `(position, label)` at positions holding the first occurrence of their
//! event, a spurious log-odds jump of size `jump` is injected and persists.
//! Each `(event, label)` pair is thus falsely reported at most once per
//! sequence. All draws are keyed by `(seed, sequence, position, label)`,
//! so every Monte-Carlo variant of one sequence sees the same noise.

use serde::{Deserialize, Serialize};

use super::{logit, sigmoid, ConditionalEstimator};
use crate::error::{Error, Result};
use crate::info::{clamp_prob, EPS};
use crate::scalar::Scalar;
use crate::seed;
use crate::types::EventId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Size of an injected jump, in log-odds.
    #[serde(default = "NoiseConfig::default_jump")]
    pub jump: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseConfig {
    fn default_jump() -> f64 {
        4.0
    }

    pub fn new(alpha: f64, beta: f64, seed: u64) -> Self {
        Self {
            alpha,
            beta,
            jump: Self::default_jump(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1)", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(self.jump >= 0.0) {
            return Err(Error::InvalidConfig("jump must be non-negative".into()));
        }
        Ok(())
    }
}

pub struct NoisyEstimator<E> {
    inner: E,
    cfg: NoiseConfig,
}

impl<E> NoisyEstimator<E> {
    pub fn new(inner: E, cfg: NoiseConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { inner, cfg })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    #[inline]
    fn draw(&self, key: u64, t: usize, j: usize, stream: u64) -> f64 {
        seed::unit(&[self.cfg.seed, key, t as u64, j as u64, stream])
    }

    /// `inner[t][c]` is the posterior of label `labels[c]` after `events[..=t]`.
    fn corrupt<T: Scalar>(&self, inner: &[Vec<T>], events: &[EventId], key: u64, labels: &[usize]) -> Vec<Vec<T>> {
        let eps = T::of(EPS);
        let jump = T::of(self.cfg.jump);
        let mut out = inner.to_vec();
        if self.cfg.alpha == 0.0 && self.cfg.beta == 0.0 {
            return out;
        }
        let mut seen = std::collections::HashSet::new();
        let fresh: Vec<bool> = events.iter().map(|&e| seen.insert(e)).collect();
        for (j, &label) in labels.iter().enumerate() {
            let mut offset = T::zero();
            for t in 1..inner.len() {
                let p = inner[t][j];
                let moved = p != inner[t - 1][j];
                if moved && self.draw(key, t, label, 1) < self.cfg.beta {
                    out[t][j] = out[t - 1][j];
                    offset = logit(out[t][j]) - logit(p);
                    continue;
                }
                let spurious = fresh[t] && self.draw(key, t, label, 2) < self.cfg.alpha;
                if spurious {
                    let towards_one = logit(p) + offset < T::zero();
                    offset = if towards_one { offset + jump } else { offset - jump };
                }
                out[t][j] = if !moved && !spurious {
                    out[t - 1][j]
                } else if offset == T::zero() {
                    p
                } else {
                    clamp_prob(sigmoid(logit(p) + offset), eps)
                };
            }
        }
        out
    }
}

impl<T: Scalar, E: ConditionalEstimator<T>> ConditionalEstimator<T> for NoisyEstimator<E> {
    fn n_events(&self) -> usize {
        self.inner.n_events()
    }

    fn n_labels(&self) -> usize {
        self.inner.n_labels()
    }

    fn next_event_dist(&self, prefix: &[EventId]) -> Vec<T> {
        self.inner.next_event_dist(prefix)
    }

    fn label_posteriors(&self, prefix: &[EventId]) -> Vec<T> {
        self.posterior_path(prefix, prefix.len() - 1, 0)
            .pop()
            .expect("non-empty prefix")
    }

    fn posterior_path_for(&self, events: &[EventId], from: usize, key: u64, labels: &[usize]) -> Vec<Vec<T>> {
        let inner = self.inner.posterior_path_for(events, 0, key, labels);
        let mut noisy = self.corrupt(&inner, events, key, labels);
        noisy.drain(..from.min(noisy.len()));
        noisy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Label head whose posterior jumps from 0.2 to 0.9 when event 1 first
    /// appears; next-event distribution is uniform.
    struct StepHead;

    impl ConditionalEstimator<f64> for StepHead {
        fn n_events(&self) -> usize {
            4
        }
        fn n_labels(&self) -> usize {
            1
        }
        fn next_event_dist(&self, _prefix: &[EventId]) -> Vec<f64> {
            vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
        }
        fn label_posteriors(&self, prefix: &[EventId]) -> Vec<f64> {
            vec![if prefix.contains(&EventId(1)) { 0.9 } else { 0.2 }]
        }
    }

    fn ids(xs: &[u32]) -> Vec<EventId> {
        xs.iter().map(|&x| EventId(x)).collect()
    }

    #[test]
    fn zero_noise_is_identity() {
        let n = NoisyEstimator::new(StepHead, NoiseConfig::new(0.0, 0.0, 5)).unwrap();
        let ev = ids(&[0, 2, 1, 2, 2]);
        for key in 0..20 {
            assert_eq!(n.posterior_path(&ev, 0, key), StepHead.posterior_path(&ev, 0, key));
        }
    }

    #[test]
    fn full_miss_rate_flattens_everything() {
        let n = NoisyEstimator::new(StepHead, NoiseConfig::new(0.0, 1.0, 5)).unwrap();
        let ev = ids(&[0, 2, 1, 2, 1]);
        let path: Vec<Vec<f64>> = n.posterior_path(&ev, 0, 3);
        assert!(path.iter().all(|p| p[0] == 0.2));
    }

    #[test]
    fn detection_rate_matches_one_minus_beta() {
        let n = NoisyEstimator::new(StepHead, NoiseConfig::new(0.05, 0.2, 11)).unwrap();
        let ev = ids(&[0, 2, 1]);
        let trials = 10_000;
        let kept = (0..trials)
            .filter(|&key| {
                let path: Vec<Vec<f64>> = n.posterior_path(&ev, 0, key);
                path[2][0] != path[1][0]
            })
            .count();
        let rate = kept as f64 / trials as f64;
        assert!((rate - 0.8).abs() <= 0.01, "rate {rate}");
    }

    #[test]
    fn spurious_rate_matches_alpha() {
        let n = NoisyEstimator::new(StepHead, NoiseConfig::new(0.05, 0.2, 11)).unwrap();
        let ev = ids(&[0, 2, 3]);
        let trials = 10_000;
        let fired = (0..trials)
            .filter(|&key| {
                let path: Vec<Vec<f64>> = n.posterior_path(&ev, 0, key);
                path[2][0] != path[1][0]
            })
            .count();
        let rate = fired as f64 / trials as f64;
        assert!((rate - 0.05).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn repeated_events_never_fire() {
        let n = NoisyEstimator::new(StepHead, NoiseConfig::new(0.9, 0.0, 4)).unwrap();
        let ev = ids(&[0, 2, 2, 2, 2]);
        for key in 0..200 {
            let path: Vec<Vec<f64>> = n.posterior_path(&ev, 0, key);
            assert!(path[2..].iter().all(|p| p[0] == path[1][0]));
        }
    }

    #[test]
    fn pointwise_and_path_agree_and_are_pure() {
        let n = NoisyEstimator::new(StepHead, NoiseConfig::new(0.3, 0.3, 2)).unwrap();
        let ev = ids(&[0, 2, 1, 2, 2, 1]);
        let a: Vec<Vec<f64>> = n.posterior_path(&ev, 2, 0);
        assert_eq!(a, n.posterior_path(&ev, 2, 0));
        for (k, row) in a.iter().enumerate() {
            let p: Vec<f64> = n.label_posteriors(&ev[..=k + 2]);
            assert_eq!(&p, row);
            assert!(p[0] >= EPS && p[0] <= 1.0 - EPS);
        }
    }

    #[test]
    fn rates_are_validated() {
        assert!(NoisyEstimator::new(StepHead, NoiseConfig::new(1.0, 0.0, 0)).is_err());
        assert!(NoisyEstimator::new(StepHead, NoiseConfig::new(0.0, 1.5, 0)).is_err());
    }
}
