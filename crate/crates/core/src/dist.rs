//! The arcsine bias distribution with optional symmetric cutoff.
//!
//! With cutoff `delta`, biases live on `[delta, 1 - delta]` with CDF
//! `(2 asin(sqrt p) - 2 asin(sqrt delta)) / (pi - 4 asin(sqrt delta))`.
//! Substituting `p = sin^2(theta)` makes `theta` uniform, which gives the
//! closed-form inverse used for sampling.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasDistribution {
    delta: f64,
    /// `asin(sqrt(delta))`
    theta_lo: f64,
}

impl BiasDistribution {
    /// `delta = 0` is the pure arcsine distribution.
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&delta) {
            return Err(domain("delta", delta, "[0, 1/2)"));
        }
        Ok(BiasDistribution {
            delta,
            theta_lo: delta.sqrt().asin(),
        })
    }

    pub fn arcsine() -> Self {
        BiasDistribution {
            delta: 0.0,
            theta_lo: 0.0,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn contains(&self, p: f64) -> bool {
        in_window(p, self.delta)
    }

    /// Width of the uniform angle range, `pi/2 - 2 asin(sqrt delta)`.
    fn theta_span(&self) -> f64 {
        FRAC_PI_2 - 2.0 * self.theta_lo
    }

    pub fn cdf(&self, p: f64) -> Result<f64> {
        if !(p >= self.delta && p <= 1.0 - self.delta) {
            return Err(domain("p", p, "[delta, 1 - delta]"));
        }
        // F(p) = 1 - F(1 - p); evaluate on the lower half where sqrt and
        // asin are well conditioned.
        let lower = |q: f64| ((q.sqrt().asin() - self.theta_lo) / self.theta_span()).max(0.0);
        Ok(if p <= 0.5 {
            lower(p)
        } else {
            (1.0 - lower(1.0 - p)).min(1.0)
        })
    }

    pub fn pdf(&self, p: f64) -> Result<f64> {
        if !(p >= self.delta && p <= 1.0 - self.delta && p > 0.0 && p < 1.0) {
            return Err(domain("p", p, "[delta, 1 - delta] within (0, 1)"));
        }
        Ok(1.0 / ((PI - 4.0 * self.theta_lo) * (p * (1.0 - p)).sqrt()))
    }

    /// Inverse-CDF draw from a uniform `u` in `(0, 1)`.
    pub fn sample(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(domain("u", u, "(0, 1)"));
        }
        Ok(self.sample_unchecked(u))
    }

    #[inline]
    pub(crate) fn sample_unchecked(&self, u: f64) -> f64 {
        let theta = self.theta_lo + u * self.theta_span();
        let s = theta.sin();
        (s * s).clamp(self.delta, 1.0 - self.delta)
    }
}

/// Whether `p` falls inside the cutoff window `[delta, 1 - delta]`.
#[inline]
pub fn in_window(p: f64, delta: f64) -> bool {
    p >= delta && p <= 1.0 - delta
}

/// Probability that a pure-arcsine draw lands outside `[delta, 1 - delta]`:
/// `(4 / pi) asin(sqrt(delta))`.
pub fn disregard_fraction(delta: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(domain("delta", delta, "[0, 1/2]"));
    }
    Ok((4.0 / PI * delta.sqrt().asin()).min(1.0))
}
