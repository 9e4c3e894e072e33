//! Memoized running integrals.
//!
//! Nested quadratures evaluate an inner integral `∫_b^t g` (or a tail
//! `∫_t^∞ g`) at many outer nodes. These helpers cache the value at every
//! queried point, so each new query only integrates the gap to its nearest
//! cached neighbour. Caches are per-instance; instances are created per
//! evaluation call, which keeps results independent of any cross-call state.

use std::cell::RefCell;

use crate::error::Result;
use crate::numerics::quadrature::{integrate_adaptive, integrate_to_infinity};

/// Running integral `x ↦ ∫_base^x g(t) dt`, memoized at queried points.
pub struct RunningIntegral<G: Fn(f64) -> f64> {
    g: G,
    base: f64,
    tol: f64,
    // Sorted by x. Values are exact partial sums relative to `base` up to
    // quadrature tolerance; each new point integrates from its nearest
    // cached neighbour (left or right, whichever is closer).
    points: RefCell<Vec<(f64, f64)>>,
}

impl<G: Fn(f64) -> f64> RunningIntegral<G> {
    pub fn new(g: G, base: f64, tol: f64) -> Self {
        Self {
            g,
            base,
            tol,
            points: RefCell::new(vec![(base, 0.0)]),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        {
            let pts = self.points.borrow();
            if let Ok(i) = pts.binary_search_by(|p| p.0.total_cmp(&x)) {
                return Ok(pts[i].1);
            }
        }
        // Nearest cached neighbour.
        let (x0, v0) = {
            let pts = self.points.borrow();
            let idx = pts.partition_point(|p| p.0 < x);
            let left = idx.checked_sub(1).map(|i| pts[i]);
            let right = pts.get(idx).copied();
            match (left, right) {
                (Some(l), Some(r)) => {
                    if x - l.0 <= r.0 - x {
                        l
                    } else {
                        r
                    }
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => (self.base, 0.0),
            }
        };
        let gap = integrate_adaptive(&self.g, x0, x, self.tol)?.require_converged()?;
        let v = v0 + gap;
        let mut pts = self.points.borrow_mut();
        let idx = pts.partition_point(|p| p.0 < x);
        pts.insert(idx, (x, v));
        Ok(v)
    }
}

/// Tail integral `x ↦ ∫_x^∞ g(t) dt`, memoized at queried points.
///
/// The first query pays for one improper integral; later queries only
/// integrate the finite gap to the nearest cached point.
pub struct TailCache<G: Fn(f64) -> f64> {
    g: G,
    tol: f64,
    points: RefCell<Vec<(f64, f64)>>,
}

impl<G: Fn(f64) -> f64> TailCache<G> {
    pub fn new(g: G, tol: f64) -> Self {
        Self {
            g,
            tol,
            points: RefCell::new(Vec::new()),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        {
            let pts = self.points.borrow();
            if let Ok(i) = pts.binary_search_by(|p| p.0.total_cmp(&x)) {
                return Ok(pts[i].1);
            }
        }
        let anchored = {
            let pts = self.points.borrow();
            let idx = pts.partition_point(|p| p.0 < x);
            let left = idx.checked_sub(1).map(|i| pts[i]);
            let right = pts.get(idx).copied();
            match (left, right) {
                (Some(l), Some(r)) => Some(if x - l.0 <= r.0 - x { l } else { r }),
                (Some(l), None) => Some(l),
                (None, Some(r)) => Some(r),
                (None, None) => None,
            }
        };
        let v = match anchored {
            Some((x0, t0)) => {
                // ∫_x^∞ = ∫_x0^∞ + ∫_x^x0
                let gap = integrate_adaptive(&self.g, x, x0, self.tol)?.require_converged()?;
                let sum = t0 + gap;
                // A result tiny against its anchor has lost most of its
                // relative precision to cancellation; recompute it directly.
                if sum.abs() < 1e-3 * t0.abs().max(gap.abs()) {
                    integrate_to_infinity(&self.g, x, self.tol)?.require_converged()?
                } else {
                    sum
                }
            }
            None => integrate_to_infinity(&self.g, x, self.tol)?.require_converged()?,
        };
        let mut pts = self.points.borrow_mut();
        let idx = pts.partition_point(|p| p.0 < x);
        pts.insert(idx, (x, v));
        Ok(v)
    }
}
