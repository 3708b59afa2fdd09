//! Binary information measures and small descriptive statistics.

use crate::scalar::Scalar;

/// Posterior clamp used throughout the label head.
pub const EPS: f64 = 1e-6;

#[inline]
pub fn clamp_prob<T: Scalar>(p: T, eps: T) -> T {
    p.max(eps).min(T::one() - eps)
}

/// KL(Bernoulli(p) ‖ Bernoulli(q)) in nats. Both arguments must lie in (0, 1).
#[inline]
pub fn binary_kl<T: Scalar>(p: T, q: T) -> T {
    let one = T::one();
    p * (p / q).ln() + (one - p) * ((one - p) / (one - q)).ln()
}

/// `p ln p + (1 - p) ln (1 - p)`, the negative binary entropy.
#[inline]
pub fn neg_entropy<T: Scalar>(p: T) -> T {
    let one = T::one();
    p * p.ln() + (one - p) * (one - p).ln()
}

/// Averages of `p` and of `neg_entropy(p)` over a set of posteriors.
///
/// `mean_q KL(p ‖ q)` is affine in these two numbers, so they are enough to
/// evaluate the average divergence against any reference marginal later.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PosteriorSummary<T> {
    pub mean: T,
    pub neg_entropy: T,
}

impl<T: Scalar> PosteriorSummary<T> {
    pub fn from_samples(ps: &[T]) -> Self {
        Self {
            mean: mean(ps),
            neg_entropy: mean(&ps.iter().map(|&p| neg_entropy(p)).collect::<Vec<_>>()),
        }
    }

    /// Mean over samples of `KL(p ‖ marginal)`.
    pub fn kl_to(&self, marginal: T) -> T {
        let one = T::one();
        let v = self.neg_entropy - self.mean * marginal.ln() - (one - self.mean) * (one - marginal).ln();
        v.max(T::zero())
    }
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / T::of_usize(xs.len() - 1)).sqrt()
}

/// Quantile by linear interpolation between order statistics
/// (position `q · (n − 1)` in the sorted sample).
pub fn quantile<T: Scalar>(xs: &[T], q: f64) -> T {
    assert!(!xs.is_empty(), "quantile of empty sample");
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    s[lo] + (s[hi] - s[lo]) * frac
}

pub fn median<T: Scalar>(xs: &[T]) -> T {
    quantile(xs, 0.5)
}
