//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Finds the root of a continuous, monotone `h` on `[lo, hi]`.
///
/// The endpoints must bracket a sign change (either endpoint may itself be a
/// root). A secant step is tried first on each iteration and falls back to
/// bisection whenever it leaves the bracket or fails to shrink it
/// geometrically, so convergence is at worst bisection-fast and usually
/// secant-fast. Terminates when the bracket width drops below
/// `tol * max(1, |root|)` or an exact zero is hit.
pub fn find_root_monotone(h: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::Domain(format!(
            "root bracket must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut a = lo;
    let mut b = hi;
    let mut fa = h(a);
    let mut fb = h(b);
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Numerics(format!(
            "root function not finite at bracket ends: h({a}) = {fa}, h({b}) = {fb}"
        )));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{a}, {b}]: h = {fa:.6e} and {fb:.6e}"
        )));
    }

    for _ in 0..200 {
        let width = b - a;
        let mid = a + 0.5 * width;
        if width <= tol * mid.abs().max(1.0) || mid <= a || mid >= b {
            return Ok(mid);
        }
        // Secant proposal, clamped away from the bracket edges so that a
        // stalled secant still leaves room to shrink.
        let secant = b - fb * (b - a) / (fb - fa);
        let margin = 0.01 * width;
        let x = if secant.is_finite() && secant > a + margin && secant < b - margin {
            secant
        } else {
            mid
        };
        let fx = h(x);
        if !fx.is_finite() {
            return Err(Error::Numerics(format!(
                "root function not finite at {x}: {fx}"
            )));
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    Ok(a + 0.5 * (b - a))
}
