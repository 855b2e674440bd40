//! Piecewise-linear approximation of convex generator costs.

use thiserror::Error;

use crate::grid::CostPoly;
use crate::scalar::Scalar;

/// Segment count used when none is given.
pub const DEFAULT_SEGMENTS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("cost is concave (quadratic coefficient {0})")]
    Concave(f64),
    #[error("at least one segment is required")]
    NoSegments,
    #[error("invalid output range [{lo}, {hi}]")]
    Range { lo: f64, hi: f64 },
}

/// Interpolant of a cost polynomial through `K+1` uniform breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct PwlCost<T> {
    pub breakpoints: Vec<T>,
    pub slopes: Vec<T>,
    /// Cost at the first breakpoint.
    pub base: T,
    quadratic: T,
}

impl<T: Scalar> PwlCost<T> {
    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn lo(&self) -> T {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> T {
        *self.breakpoints.last().expect("breakpoints")
    }

    /// Segment widths; all equal except in the degenerate zero-width case.
    pub fn widths(&self) -> Vec<T> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Interpolated cost at `p`, clamped to the covered range.
    pub fn eval(&self, p: T) -> T {
        let p = p.max(self.lo()).min(self.hi());
        let mut cost = self.base;
        for (w, &slope) in self.breakpoints.windows(2).zip(&self.slopes) {
            if p <= w[0] {
                break;
            }
            cost = cost + slope * (p.min(w[1]) - w[0]);
        }
        cost
    }

    /// Worst overestimate of the polynomial, attained at segment midpoints.
    pub fn max_error(&self) -> T {
        let w = self.widths().into_iter().fold(T::zero(), T::max);
        self.quadratic * w * w / T::lit(4.0)
    }
}

pub fn linearize_cost<T: Scalar>(poly: &CostPoly<T>, lo: T, hi: T, segments: usize) -> Result<PwlCost<T>, CostError> {
    if segments == 0 {
        return Err(CostError::NoSegments);
    }
    if poly.c2 < T::zero() {
        return Err(CostError::Concave(poly.c2.as_f64()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(CostError::Range { lo: lo.as_f64(), hi: hi.as_f64() });
    }
    let k = T::lit(segments as f64);
    let breakpoints: Vec<T> = (0..=segments)
        .map(|j| if j == segments { hi } else { lo + (hi - lo) * T::lit(j as f64) / k })
        .collect();
    let slopes = breakpoints
        .windows(2)
        .map(|w| {
            if w[1] > w[0] {
                (poly.eval(w[1]) - poly.eval(w[0])) / (w[1] - w[0])
            } else {
                poly.c1 + T::lit(2.0) * poly.c2 * w[0]
            }
        })
        .collect();
    Ok(PwlCost { base: poly.eval(lo), breakpoints, slopes, quadratic: poly.c2 })
}
