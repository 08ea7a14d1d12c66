//! Least-squares power-law fitting for convergence-rate harnesses.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::real::{real, Real};
use crate::Result;

/// Least-squares line through `(log h, log error)` with its `r^2`.
///
/// `slope` is the fitted convergence order; `r2` is reported, not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit<T> {
    pub h_values: Vec<T>,
    pub errors: Vec<T>,
    pub slope: T,
    pub intercept: T,
    pub r2: T,
}

impl<T: Real> RateFit<T> {
    /// Fits `log(error) = slope * log(h) + intercept`.
    ///
    /// Errors are floored at 1e-300 so exactly-zero entries (trivial
    /// profiles) stay finite; such fits report near-flat slopes.
    pub fn fit(h_values: Vec<T>, errors: Vec<T>) -> Result<Self> {
        if h_values.len() != errors.len() || h_values.len() < 2 {
            return Err(Error::invalid("rate fit needs at least two (h, error) pairs"));
        }
        if h_values.iter().any(|h| !(*h > T::zero())) {
            return Err(Error::invalid("rate fit needs positive h values"));
        }
        if errors.iter().any(|e| !e.is_finite() || *e < T::zero()) {
            return Err(Error::invalid("rate fit needs finite nonnegative errors"));
        }
        let floor: T = real(1e-300);
        let xs: Vec<T> = h_values.iter().map(|h| h.ln()).collect();
        let ys: Vec<T> = errors.iter().map(|e| e.max(floor).ln()).collect();
        let n: T = real(xs.len() as f64);
        let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) / n;
        let xm = mean(&xs);
        let ym = mean(&ys);
        let mut sxx = T::zero();
        let mut sxy = T::zero();
        let mut syy = T::zero();
        for (&x, &y) in xs.iter().zip(ys.iter()) {
            sxx = sxx + (x - xm) * (x - xm);
            sxy = sxy + (x - xm) * (y - ym);
            syy = syy + (y - ym) * (y - ym);
        }
        if sxx == T::zero() {
            return Err(Error::invalid("rate fit needs at least two distinct h values"));
        }
        let slope = sxy / sxx;
        let intercept = ym - slope * xm;
        let r2 = if syy == T::zero() {
            T::one()
        } else {
            (sxy * sxy / (sxx * syy)).min(T::one())
        };
        Ok(RateFit {
            h_values,
            errors,
            slope,
            intercept,
            r2,
        })
    }

    /// Fitted error at `h` (for table emission).
    pub fn predicted(&self, h: T) -> T {
        (self.intercept + self.slope * h.ln()).exp()
    }
}
