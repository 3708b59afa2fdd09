use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-8;
const EDGE: f64 = 1e-6;

/// Two-component Beta mixture on (0, 1). Component 0 has the smaller mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaMixture {
    pub weights: [f64; 2],
    /// `(alpha, beta)` shape pairs.
    pub shapes: [(f64, f64); 2],
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Shapes matching a mean and variance, if any exist.
fn moments(mean: f64, var: f64) -> Option<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0 && var > 0.0) {
        return None;
    }
    let common = mean * (1.0 - mean) / var - 1.0;
    if !(common > 0.0 && common.is_finite()) {
        return None;
    }
    Some((mean * common, (1.0 - mean) * common))
}

fn weighted_moments(xs: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    let total: f64 = w.iter().sum();
    if !(total > 1e-9) {
        return None;
    }
    let mean = xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = xs.iter().zip(w).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / total;
    Some((total, mean, var))
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl BetaMixture {
    /// EM with method-of-moments M-steps, initialised from a median split.
    /// Returns `None` for degenerate samples (fewer than two points per half,
    /// zero variance, or a component that loses all its mass).
    pub fn fit(xs: &[f64]) -> Option<Self> {
        let xs: Vec<f64> = xs.iter().map(|x| x.clamp(EDGE, 1.0 - EDGE)).collect();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let half = sorted.len() / 2;
        if half < 2 {
            return None;
        }
        let init = |part: &[f64]| {
            let w = vec![1.0; part.len()];
            let (_, m, v) = weighted_moments(part, &w)?;
            moments(m, v)
        };
        let mut shapes = [init(&sorted[..half])?, init(&sorted[half..])?];
        let mut weights = [0.5f64, 0.5];
        let mut resp = vec![0.0; xs.len()];
        let mut prev = f64::NEG_INFINITY;
        let mut ll = prev;
        let mut iterations = 0;
        for it in 1..=MAX_ITER {
            iterations = it;
            let d0 = Beta::new(shapes[0].0, shapes[0].1).ok()?;
            let d1 = Beta::new(shapes[1].0, shapes[1].1).ok()?;
            ll = 0.0;
            for (x, r) in xs.iter().zip(resp.iter_mut()) {
                let l0 = weights[0].ln() + d0.ln_pdf(*x);
                let l1 = weights[1].ln() + d1.ln_pdf(*x);
                let lse = log_sum_exp(l0, l1);
                *r = (l1 - lse).exp();
                ll += lse;
            }
            if !ll.is_finite() {
                return None;
            }
            let r0: Vec<f64> = resp.iter().map(|r| 1.0 - r).collect();
            let (t0, m0, v0) = weighted_moments(&xs, &r0)?;
            let (t1, m1, v1) = weighted_moments(&xs, &resp)?;
            shapes = [moments(m0, v0)?, moments(m1, v1)?];
            let n = xs.len() as f64;
            weights = [t0 / n, t1 / n];
            if (ll - prev).abs() < TOL {
                break;
            }
            prev = ll;
        }
        let mut fit = Self {
            weights,
            shapes,
            log_likelihood: ll,
            iterations,
        };
        if fit.mean(0) > fit.mean(1) {
            fit.weights.swap(0, 1);
            fit.shapes.swap(0, 1);
        }
        Some(fit)
    }

    pub fn mean(&self, c: usize) -> f64 {
        let (a, b) = self.shapes[c];
        a / (a + b)
    }

    /// Posterior probability that `x` belongs to the upper component.
    pub fn responsibility(&self, x: f64) -> f64 {
        let x = x.clamp(EDGE, 1.0 - EDGE);
        let l = |c: usize| {
            let (a, b) = self.shapes[c];
            self.weights[c].ln() + Beta::new(a, b).expect("fitted shapes").ln_pdf(x)
        };
        let (l0, l1) = (l(0), l(1));
        (l1 - log_sum_exp(l0, l1)).exp()
    }

    /// `q`-quantile of the lower (spurious) component.
    pub fn spurious_quantile(&self, q: f64) -> f64 {
        let (a, b) = self.shapes[0];
        Beta::new(a, b).expect("fitted shapes").inverse_cdf(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Beta as BetaDist, Distribution};

    #[test]
    fn separates_a_bimodal_sample() {
        let mut rng = seed::rng(&[17]);
        let lo = BetaDist::new(2.0, 20.0).unwrap();
        let hi = BetaDist::new(20.0, 2.0).unwrap();
        let mut xs = Vec::new();
        let mut truth = Vec::new();
        for k in 0..2000 {
            let upper = k % 3 == 0;
            xs.push(if upper { hi.sample(&mut rng) } else { lo.sample(&mut rng) });
            truth.push(upper);
        }
        let fit = BetaMixture::fit(&xs).unwrap();
        let correct = xs
            .iter()
            .zip(&truth)
            .filter(|&(&x, &t)| (fit.responsibility(x) > 0.5) == t)
            .count();
        assert!(correct as f64 / xs.len() as f64 >= 0.99, "{correct}");
        assert!((fit.weights[1] - 1.0 / 3.0).abs() < 0.03);
        assert!((fit.mean(0) - 2.0 / 22.0).abs() < 0.01);
        assert!((fit.mean(1) - 20.0 / 22.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_samples_do_not_fit() {
        assert!(BetaMixture::fit(&[0.3; 50]).is_none());
        assert!(BetaMixture::fit(&[0.1, 0.9, 0.2]).is_none());
    }

    #[test]
    fn quantile_is_monotone() {
        let fit = BetaMixture {
            weights: [0.7, 0.3],
            shapes: [(2.0, 20.0), (20.0, 2.0)],
            log_likelihood: 0.0,
            iterations: 0,
        };
        let qs: Vec<f64> = [0.8, 0.85, 0.95, 0.99].iter().map(|&q| fit.spurious_quantile(q)).collect();
        assert!(qs.windows(2).all(|w| w[0] < w[1]));
    }
}
