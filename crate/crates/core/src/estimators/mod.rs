//! Density-estimator contract: a next-event distribution and per-label
//! Bernoulli posteriors, both conditioned on an event prefix.

mod ngram;
mod noisy;
mod oracle;

pub use ngram::NGramEstimator;
pub use noisy::{NoiseConfig, NoisyEstimator};
pub use oracle::{OracleEstimator, MAX_EXACT_LITERALS, ROLLOUTS};

use crate::scalar::Scalar;
use crate::types::EventId;

/// Autoregressive event model paired with a label head.
///
/// Prefixes always begin with [`EventId::START`]. Implementations are pure:
/// identical arguments give identical outputs.
pub trait ConditionalEstimator<T: Scalar>: Send + Sync {
    fn n_events(&self) -> usize;

    fn n_labels(&self) -> usize;

    /// Distribution of the event following `prefix`, over the whole event
    /// vocabulary (the marker always gets zero mass).
    fn next_event_dist(&self, prefix: &[EventId]) -> Vec<T>;

    /// `P(Y_j = 1 | prefix)` for every label, clamped to `[ε, 1 − ε]`.
    fn label_posteriors(&self, prefix: &[EventId]) -> Vec<T>;

    /// Posteriors after each prefix `events[..=t]`, for `t` in
    /// `from..events.len()`. `key` identifies the sequence the events belong
    /// to; only estimators with seeded noise look at it.
    fn posterior_path(&self, events: &[EventId], from: usize, key: u64) -> Vec<Vec<T>> {
        let all: Vec<usize> = (0..self.n_labels()).collect();
        self.posterior_path_for(events, from, key, &all)
    }

    /// [`posterior_path`](Self::posterior_path) restricted to the label
    /// indices in `labels`, in that order.
    fn posterior_path_for(&self, events: &[EventId], from: usize, key: u64, labels: &[usize]) -> Vec<Vec<T>> {
        let _ = key;
        (from..events.len())
            .map(|t| {
                let p = self.label_posteriors(&events[..=t]);
                labels.iter().map(|&j| p[j]).collect()
            })
            .collect()
    }
}

macro_rules! forward {
    ($($ty:ty),*) => {$(
        impl<T: Scalar, E: ConditionalEstimator<T> + ?Sized> ConditionalEstimator<T> for $ty {
            fn n_events(&self) -> usize {
                (**self).n_events()
            }
            fn n_labels(&self) -> usize {
                (**self).n_labels()
            }
            fn next_event_dist(&self, prefix: &[EventId]) -> Vec<T> {
                (**self).next_event_dist(prefix)
            }
            fn label_posteriors(&self, prefix: &[EventId]) -> Vec<T> {
                (**self).label_posteriors(prefix)
            }
            fn posterior_path(&self, events: &[EventId], from: usize, key: u64) -> Vec<Vec<T>> {
                (**self).posterior_path(events, from, key)
            }
            fn posterior_path_for(
                &self,
                events: &[EventId],
                from: usize,
                key: u64,
                labels: &[usize],
            ) -> Vec<Vec<T>> {
                (**self).posterior_path_for(events, from, key, labels)
            }
        }
    )*};
}

forward!(&E, Box<E>, std::sync::Arc<E>);

#[inline]
pub(crate) fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
