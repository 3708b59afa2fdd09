use serde::{Deserialize, Serialize};

use crate::info::{median, quantile};
use crate::scalar::Scalar;

const GUARD: f64 = 1e-9;

/// Support-dependent frequency threshold
/// `τ(m) = (τ_max − τ_min) / (1 + exp(k (ln(m + g) − ln(m₀ + g)))) + τ_min`
/// with the zero-support guard `g = 1e-9`.
///
/// `m₀` is the median support and `k = 2 ln 3 / (ln q₇₅ − ln q₂₅)`, so the
/// threshold covers the middle half of its range between the two quartiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdaptiveThreshold<T> {
    pub tau_max: T,
    pub tau_min: T,
    pub m0: T,
    pub k: T,
}

impl<T: Scalar> AdaptiveThreshold<T> {
    /// Calibrates from label supports; zero supports are ignored.
    /// Returns `None` when no label has support.
    pub fn fit(supports: &[u64], tau_max: T, tau_min: T) -> Option<Self> {
        let s: Vec<T> = supports
            .iter()
            .filter(|&&m| m > 0)
            .map(|&m| T::of(m as f64))
            .collect();
        if s.is_empty() {
            return None;
        }
        let m0 = median(&s);
        let spread = quantile(&s, 0.75).ln() - quantile(&s, 0.25).ln();
        let k = if spread > T::zero() {
            T::of(2.0 * 3f64.ln()) / spread
        } else {
            T::one()
        };
        Some(Self {
            tau_max,
            tau_min,
            m0,
            k,
        })
    }

    pub fn eval(&self, m: T) -> T {
        // Guarding m₀ too keeps τ(m₀) exactly at the midpoint.
        let g = T::of(GUARD);
        let z = self.k * ((m + g).ln() - (self.m0 + g).ln());
        (self.tau_max - self.tau_min) / (T::one() + z.exp()) + self.tau_min
    }
}
