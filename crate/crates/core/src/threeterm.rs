//! Integral operators on velocity-like maps and the three-term implicit
//! expansion of the boundary distance.
//!
//! For a positive map v define P v = ∫_b^u v dt, Q v = P v / v,
//! R v = ∫_u^∞ dt/v, and T v = (N−1) P(Q v) + P(v · R v). Applied to the
//! free-fall speed √(2F) these yield three remainder terms
//!
//! ```text
//! R₀(U) = ∫_U^∞ du/√(2F)
//! R₁(U) = (N−1) ∫_U^∞ (∫_b^u √(2F) dt) (2F)^(−3/2) du
//! R₂(U) = (N−1) ∫_U^∞ [ −∫_b^u ((N−1)·(∫_b^t √(2F) ds)/√(2F)
//!                         + √(2F)·∫_·^∞ ds/√(2F)) dt
//!                       + (5(N−1)/4)·(∫_b^u √(2F) dt)²/(2F) ] (2F)^(−3/2) du
//! ```
//!
//! such that the boundary distance satisfies
//! d = R₀(u) + R₁(u) + R₂(u)·(1 + o(1)) along a blow-up solution; inverting
//! the truncated sum gives the second-order profile u₂(d).
//!
//! All indefinite integrals ∫^· share one base point b, exposed because the
//! source display leaves it implicit — shifting b only moves contributions
//! already absorbed by the o(1). The inner tail integral inside R₂'s
//! bracket has an ambiguous lower limit in the source display (the outer
//! variable u collides with the bracket's integration variable t); the
//! default reads it at the running variable t, matching T v = P(v · R v),
//! and the literal outer-variable reading is available as an option.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{
    find_root_monotone, integrate_adaptive, integrate_to_infinity, RunningIntegral, TailCache,
    TailIntegral,
};

type Map = Box<dyn Fn(f64) -> f64>;

const INNER_TOL: f64 = 1e-11;
const TERM_TOL: f64 = 1e-10;
const ROOT_TOL: f64 = 1e-12;

/// How to read the ambiguous lower limit of the innermost tail integral in
/// the second remainder's bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailReading {
    /// Evaluate the tail at the bracket's running variable (default;
    /// matches T v = P(v · R v)).
    #[default]
    RunningVariable,
    /// Evaluate the tail at the outer integration variable, frozen across
    /// the bracket.
    OuterVariable,
}

/// The three remainder terms at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderTriple {
    /// Evaluation point.
    pub u: f64,
    /// Leading term ∫_u^∞ dt/√(2F); always positive.
    pub r0: f64,
    /// First curvature correction; zero in one dimension.
    pub r1: f64,
    /// Second correction; zero in one dimension.
    pub r2: f64,
    /// Base point of the indefinite integrals.
    pub base: f64,
}

/// P v = ∫_b^u v dt.
pub fn op_p(v: impl Fn(f64) -> f64, b: f64, u: f64) -> Result<f64> {
    integrate_adaptive(&v, b, u, INNER_TOL)?.require_converged()
}

/// Q v = P v / v, evaluated at u.
pub fn op_q(v: impl Fn(f64) -> f64, b: f64, u: f64) -> Result<f64> {
    let p = op_p(&v, b, u)?;
    let vu = v(u);
    if !(vu > 0.0) || !vu.is_finite() {
        return Err(Error::Domain(format!(
            "Q needs v(u) positive and finite, got v({u}) = {vu}"
        )));
    }
    Ok(p / vu)
}

/// R v = ∫_u^∞ dt/v.
pub fn op_r(v: impl Fn(f64) -> f64, u: f64) -> Result<f64> {
    let recip = |t: f64| {
        let vt = v(t);
        if vt > 0.0 {
            if vt.is_infinite() {
                0.0
            } else {
                1.0 / vt
            }
        } else {
            f64::NAN
        }
    };
    integrate_to_infinity(recip, u, TERM_TOL)?.require_converged()
}

/// T v = (N−1) P(Q v) + P(v · R v).
pub fn op_t(v: impl Fn(f64) -> f64 + 'static, n_dim: usize, b: f64, u: f64) -> Result<f64> {
    if n_dim < 1 {
        return Err(Error::Domain(format!(
            "dimension must be >= 1, got {n_dim}"
        )));
    }
    let coeff = (n_dim - 1) as f64;
    let v = Rc::new(v);
    let pv = {
        let v = v.clone();
        Rc::new(RunningIntegral::new(
            Box::new(move |t| v(t)) as Map,
            b,
            INNER_TOL,
        ))
    };
    let rv = {
        let v = v.clone();
        Rc::new(TailCache::new(
            Box::new(move |t| {
                let vt = v(t);
                if vt > 0.0 {
                    if vt.is_infinite() {
                        0.0
                    } else {
                        1.0 / vt
                    }
                } else {
                    f64::NAN
                }
            }) as Map,
            INNER_TOL,
        ))
    };
    let integrand = |t: f64| {
        let vt = v(t);
        if !(vt > 0.0) || !vt.is_finite() {
            return f64::NAN;
        }
        let p = match pv.eval(t) {
            Ok(x) => x,
            Err(_) => return f64::NAN,
        };
        let r = match rv.eval(t) {
            Ok(x) => x,
            Err(_) => return f64::NAN,
        };
        coeff * p / vt + vt * r
    };
    integrate_adaptive(integrand, b, u, TERM_TOL)?.require_converged()
}

/// Memoizing evaluator for the remainder terms of one nonlinearity: the
/// speed antiderivative, its reciprocal tail, and the bracket integrals are
/// cached and shared across evaluation points.
pub struct ThreeTermEvaluator {
    nl: Nonlinearity,
    n_dim: usize,
    base: f64,
    reading: TailReading,
    area: Rc<RunningIntegral<Map>>,
    tail: Rc<TailCache<Map>>,
    bracket_running: RunningIntegral<Map>,
    bracket_q_only: RunningIntegral<Map>,
}

fn term_err(term: &str, e: Error) -> Error {
    Error::Numerics(format!("{term} failed: {e}"))
}

impl ThreeTermEvaluator {
    pub fn new(nl: &Nonlinearity, n_dim: usize, base: f64, reading: TailReading) -> Result<Self> {
        if n_dim < 1 {
            return Err(Error::Domain(format!(
                "dimension must be >= 1, got {n_dim}"
            )));
        }
        if !(base >= nl.a()) {
            return Err(Error::Domain(format!(
                "base point {base} must not lie below the positivity threshold {}",
                nl.a()
            )));
        }
        let big_base = nl.big_f(base)?;
        if !(big_base >= 0.0) {
            return Err(Error::Domain(format!(
                "base point {base} has negative antiderivative {big_base}"
            )));
        }
        let coeff = (n_dim - 1) as f64;
        let speed = {
            let nl = nl.clone();
            Box::new(move |t: f64| match nl.big_f(t) {
                Ok(big) if big >= 0.0 => (2.0 * big).sqrt(),
                _ => f64::NAN,
            }) as Map
        };
        let area = Rc::new(RunningIntegral::new(speed, base, INNER_TOL));
        let inv_speed = {
            let nl = nl.clone();
            Box::new(move |t: f64| match nl.big_f(t) {
                Ok(big) if big > 0.0 => {
                    let s = (2.0 * big).sqrt();
                    if s.is_infinite() {
                        0.0
                    } else {
                        1.0 / s
                    }
                }
                _ => f64::NAN,
            }) as Map
        };
        let tail = Rc::new(TailCache::new(inv_speed, INNER_TOL));
        let bracket_running = {
            let nl = nl.clone();
            let area = area.clone();
            let tail = tail.clone();
            RunningIntegral::new(
                Box::new(move |t: f64| {
                    let v = match nl.big_f(t) {
                        Ok(big) if big > 0.0 => (2.0 * big).sqrt(),
                        _ => return f64::NAN,
                    };
                    let a_val = match area.eval(t) {
                        Ok(x) => x,
                        Err(_) => return f64::NAN,
                    };
                    let tl = match tail.eval(t) {
                        Ok(x) => x,
                        Err(_) => return f64::NAN,
                    };
                    coeff * a_val / v + v * tl
                }) as Map,
                base,
                INNER_TOL,
            )
        };
        let bracket_q_only = {
            let nl = nl.clone();
            let area = area.clone();
            RunningIntegral::new(
                Box::new(move |t: f64| {
                    let v = match nl.big_f(t) {
                        Ok(big) if big > 0.0 => (2.0 * big).sqrt(),
                        _ => return f64::NAN,
                    };
                    match area.eval(t) {
                        Ok(a_val) => coeff * a_val / v,
                        Err(_) => f64::NAN,
                    }
                }) as Map,
                base,
                INNER_TOL,
            )
        };
        Ok(ThreeTermEvaluator {
            nl: nl.clone(),
            n_dim,
            base,
            reading,
            area,
            tail,
            bracket_running,
            bracket_q_only,
        })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// R₀(u) = ∫_u^∞ dt/√(2F).
    pub fn r0(&self, u: f64) -> Result<f64> {
        self.tail.eval(u).map_err(|e| term_err("R0", e))
    }

    /// R₁(u); zero in one dimension.
    pub fn r1(&self, u: f64) -> Result<f64> {
        if self.n_dim == 1 {
            return Ok(0.0);
        }
        let coeff = (self.n_dim - 1) as f64;
        let integrand = |t: f64| {
            let denom = match self.nl.big_f(t) {
                Ok(big) if big > 0.0 => (2.0 * big).powf(1.5),
                _ => return f64::NAN,
            };
            if denom.is_infinite() {
                return 0.0;
            }
            match self.area.eval(t) {
                Ok(a_val) => coeff * a_val / denom,
                Err(_) => f64::NAN,
            }
        };
        integrate_to_infinity(integrand, u, TERM_TOL)
            .and_then(TailIntegral::require_converged)
            .map_err(|e| term_err("R1", e))
    }

    /// R₂(u); zero in one dimension.
    pub fn r2(&self, u: f64) -> Result<f64> {
        if self.n_dim == 1 {
            return Ok(0.0);
        }
        let coeff = (self.n_dim - 1) as f64;
        let quad_coeff = 5.0 * coeff / 4.0;
        let integrand = |t: f64| {
            let (big, v) = match self.nl.big_f(t) {
                Ok(big) if big > 0.0 => (big, (2.0 * big).sqrt()),
                _ => return f64::NAN,
            };
            let denom = (2.0 * big).powf(1.5);
            if denom.is_infinite() || v.is_infinite() {
                return 0.0;
            }
            let a_val = match self.area.eval(t) {
                Ok(x) => x,
                Err(_) => return f64::NAN,
            };
            let bracket_int = match self.reading {
                TailReading::RunningVariable => match self.bracket_running.eval(t) {
                    Ok(x) => x,
                    Err(_) => return f64::NAN,
                },
                TailReading::OuterVariable => {
                    let q_part = match self.bracket_q_only.eval(t) {
                        Ok(x) => x,
                        Err(_) => return f64::NAN,
                    };
                    let tl = match self.tail.eval(t) {
                        Ok(x) => x,
                        Err(_) => return f64::NAN,
                    };
                    q_part + tl * a_val
                }
            };
            let q = a_val / v;
            coeff * (-bracket_int + quad_coeff * q * q) / denom
        };
        integrate_to_infinity(integrand, u, TERM_TOL)
            .and_then(TailIntegral::require_converged)
            .map_err(|e| term_err("R2", e))
    }

    /// All three terms at u (requires u at or above the base point).
    pub fn remainders(&self, u: f64) -> Result<RemainderTriple> {
        if !(u >= self.base) {
            return Err(Error::Domain(format!(
                "evaluation point {u} lies below the base point {}",
                self.base
            )));
        }
        Ok(RemainderTriple {
            u,
            r0: self.r0(u)?,
            r1: self.r1(u)?,
            r2: self.r2(u)?,
            base: self.base,
        })
    }

    /// R₀ + R₁ + R₂ at u.
    pub fn total(&self, u: f64) -> Result<f64> {
        let t = self.remainders(u)?;
        Ok(t.r0 + t.r1 + t.r2)
    }

    /// Solves R₀(u) + R₁(u) + R₂(u) = d for u, bracketing around the
    /// leading-order root of R₀(u) = d.
    pub fn invert(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!(
                "boundary distance must be positive and finite, got {d}"
            )));
        }
        let floor = self.base.max(self.nl.a());
        // Find a left end where the leading term still exceeds d.
        let mut lo = floor + 1.0;
        let mut r = self.r0(lo)?;
        let mut shrink = 0usize;
        while r <= d {
            let next = floor + (lo - floor) / 4.0;
            shrink += 1;
            if !(next < lo) || shrink > 600 {
                return Err(Error::Bracket(format!(
                    "distance {d} is too large for the asymptotic regime \
                     (leading term peaks at {r} near the threshold)"
                )));
            }
            lo = next;
            r = self.r0(lo)?;
        }
        // And a right end beyond the leading-order root.
        let mut hi = lo.max(1.0);
        loop {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Bracket(format!(
                    "no upper bracket for the leading-order inversion at d = {d}"
                )));
            }
            if self.r0(hi)? < d {
                break;
            }
        }
        let lead = |u: f64| match self.r0(u) {
            Ok(x) => x - d,
            Err(_) => f64::NAN,
        };
        let root0 = find_root_monotone(lead, lo, hi, ROOT_TOL)?;
        if self.n_dim == 1 {
            // Both corrections vanish identically.
            return Ok(root0);
        }

        let g = |u: f64| match self.total(u) {
            Ok(x) => x - d,
            Err(_) => f64::NAN,
        };
        let g0 = self.total(root0)? - d;
        if g0 == 0.0 {
            return Ok(root0);
        }
        if g0 > 0.0 {
            // Corrections raise the sum: the full root lies above root0.
            let mut span = 0.25 * (root0 - floor).max(f64::MIN_POSITIVE);
            let mut hi = root0 + span;
            while self.total(hi)? > d {
                span *= 2.0;
                hi = root0 + span;
                if hi > 1e300 {
                    return Err(Error::Bracket(format!(
                        "no upper bracket for the three-term inversion at d = {d}"
                    )));
                }
            }
            find_root_monotone(g, root0, hi, ROOT_TOL)
        } else {
            // Corrections lower the sum: the full root lies below root0.
            let mut lo = floor + (root0 - floor) / 2.0;
            let mut shrink = 0usize;
            while self.total(lo)? < d {
                let next = floor + (lo - floor) / 4.0;
                shrink += 1;
                if !(next < lo) || shrink > 600 {
                    return Err(Error::Bracket(format!(
                        "distance {d} is too large for the asymptotic regime \
                         (three-term sum stays below it)"
                    )));
                }
                lo = next;
            }
            find_root_monotone(g, lo, root0, ROOT_TOL)
        }
    }
}

/// The remainder terms with the default tail reading.
pub fn remainder_terms(
    nl: &Nonlinearity,
    n_dim: usize,
    u: f64,
    base: f64,
) -> Result<RemainderTriple> {
    ThreeTermEvaluator::new(nl, n_dim, base, TailReading::default())?.remainders(u)
}

/// Second-order profile value u₂(d) via the three-term inversion, default
/// tail reading.
pub fn invert_three_term(nl: &Nonlinearity, n_dim: usize, d: f64, base: f64) -> Result<f64> {
    ThreeTermEvaluator::new(nl, n_dim, base, TailReading::default())?.invert(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::VelocityProfile;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// The cubic-power free-fall speed t²/√2.
    fn cubic_speed(t: f64) -> f64 {
        t * t / std::f64::consts::SQRT_2
    }

    #[test]
    fn op_p_accumulates_the_cubic_speed() {
        // ∫_0^10 t²/√2 dt = 1000/(3√2) ≈ 235.702.
        assert_relative_eq!(
            op_p(cubic_speed, 0.0, 10.0).unwrap(),
            1000.0 / (3.0 * std::f64::consts::SQRT_2),
            max_relative = 1e-9
        );
    }

    #[test]
    fn op_q_is_the_accumulated_speed_ratio() {
        assert_relative_eq!(
            op_q(cubic_speed, 0.0, 10.0).unwrap(),
            10.0 / 3.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn op_r_is_the_reciprocal_tail() {
        assert_relative_eq!(
            op_r(cubic_speed, 10.0).unwrap(),
            std::f64::consts::SQRT_2 / 10.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn op_r_reports_divergent_tails() {
        assert!(matches!(
            op_r(|t: f64| 1.0 + t.abs().sqrt() * 0.0 + 0.0 * t, 1.0),
            Err(Error::Numerics(_))
        ));
    }

    #[test]
    fn op_t_combines_both_accumulations() {
        // For v = t²/√2, N = 3, b = 0: T v (u) = u²/3 + u²/2 = 5u²/6.
        assert_relative_eq!(
            op_t(cubic_speed, 3, 0.0, 10.0).unwrap(),
            500.0 / 6.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn quintic_remainders_match_their_closed_forms() {
        // pow:5 (F = t⁶/6, √(2F) = t³/√3), N = 3, U = 10, b = 0:
        // R₀ = √3/200, R₁ = 2·(3/16)·10⁻⁴, R₂ = −(33√3/96)·10⁻⁶.
        let nl = Nonlinearity::power(5.0).unwrap();
        let t = remainder_terms(&nl, 3, 10.0, 0.0).unwrap();
        assert_abs_diff_eq!(t.r0, 3f64.sqrt() / 200.0, epsilon = 1e-8);
        assert_abs_diff_eq!(t.r1, 3.75e-5, epsilon = 1e-9);
        assert_relative_eq!(t.r2, -33.0 * 3f64.sqrt() / 96.0 * 1e-6, max_relative = 1e-6);
        assert!(t.r2.abs() / t.r1 < 0.1);
    }

    #[test]
    fn outer_variable_reading_changes_the_second_term_only() {
        let nl = Nonlinearity::power(5.0).unwrap();
        let ev = ThreeTermEvaluator::new(&nl, 3, 0.0, TailReading::OuterVariable).unwrap();
        let t = ev.remainders(10.0).unwrap();
        assert_abs_diff_eq!(t.r0, 3f64.sqrt() / 200.0, epsilon = 1e-8);
        assert_abs_diff_eq!(t.r1, 3.75e-5, epsilon = 1e-9);
        assert_relative_eq!(t.r2, -21.0 * 3f64.sqrt() / 96.0 * 1e-6, max_relative = 1e-6);
    }

    #[test]
    fn remainders_keep_the_asymptotic_ordering() {
        for nl in [
            Nonlinearity::power(5.0).unwrap(),
            Nonlinearity::exponential(),
        ] {
            let t = remainder_terms(&nl, 3, 10.0, 0.0).unwrap();
            assert!(t.r0 > 0.0);
            assert!(
                t.r0 > t.r1.abs() && t.r1.abs() > t.r2.abs(),
                "{}: {t:?}",
                nl.spec_text()
            );
        }
    }

    #[test]
    fn inversion_tracks_the_second_iterate_profile() {
        // The implicit three-term root and the twice-iterated velocity
        // profile approximate the same object; their gap shrinks with d.
        let nl = Nonlinearity::power(5.0).unwrap();
        let v0 = VelocityProfile::make_v0(&nl, 2.0, 2.0e6, 256).unwrap();
        let v1 = v0.iterate(3).unwrap();
        let v2 = v1.iterate(3).unwrap();
        let ev = ThreeTermEvaluator::new(&nl, 3, 0.0, TailReading::default()).unwrap();
        let mut rel_gaps = Vec::new();
        for &d in &[1e-2, 1e-3, 1e-4] {
            let implicit = ev.invert(d).unwrap();
            let iterated = v2.invert(d).unwrap();
            let u0 = v0.invert(d).unwrap();
            rel_gaps.push((implicit - iterated).abs() / u0);
        }
        assert!(rel_gaps[0] < 1e-2, "gaps {rel_gaps:?}");
        assert!(rel_gaps[1] < 1e-3, "gaps {rel_gaps:?}");
        assert!(
            rel_gaps[1] < rel_gaps[0] && rel_gaps[2] < rel_gaps[1],
            "gaps {rel_gaps:?}"
        );
    }

    #[test]
    fn leading_term_alone_reproduces_the_starting_profile() {
        // In one dimension both corrections vanish, so the inversion solves
        // R₀ = d exactly — the starting profile.
        let nl = Nonlinearity::power(5.0).unwrap();
        let v0 = VelocityProfile::make_v0(&nl, 2.0, 2.0e6, 256).unwrap();
        for &d in &[1e-2, 1e-3] {
            assert_relative_eq!(
                invert_three_term(&nl, 1, d, 0.0).unwrap(),
                v0.invert(d).unwrap(),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn one_dimensional_inversion_matches_the_closed_form() {
        // pow:3: R₀(u) = √2/u, so u(d) = √2/d.
        let nl = Nonlinearity::power(3.0).unwrap();
        assert_relative_eq!(
            invert_three_term(&nl, 1, 1e-3, 0.0).unwrap(),
            std::f64::consts::SQRT_2 * 1e3,
            max_relative = 1e-9
        );
    }

    #[test]
    fn curvature_pushes_the_root_above_the_starting_profile() {
        // The positive first correction lowers the distance budget, so the
        // multi-dimensional root sits above the one-dimensional one.
        let nl = Nonlinearity::power(3.0).unwrap();
        for &d in &[1e-2, 1e-3] {
            let u2 = invert_three_term(&nl, 3, d, 0.0).unwrap();
            let u0 = std::f64::consts::SQRT_2 / d;
            assert!(u2 > u0, "d = {d}: {u2} <= {u0}");
        }
    }

    #[test]
    fn first_term_is_insensitive_to_the_base_point() {
        // Doubling the base point perturbs R₁ far below the 1% level.
        let nl = Nonlinearity::power(5.0).unwrap();
        let a = ThreeTermEvaluator::new(&nl, 3, 1.0, TailReading::default())
            .unwrap()
            .r1(10.0)
            .unwrap();
        let b = ThreeTermEvaluator::new(&nl, 3, 2.0, TailReading::default())
            .unwrap()
            .r1(10.0)
            .unwrap();
        assert!((a - b).abs() / a < 0.01, "R1 moved from {a} to {b}");
    }

    #[test]
    fn divergent_leading_tail_names_the_failing_term() {
        // f(u) = u gives F quadratic, whose reciprocal-speed tail diverges.
        let nl = Nonlinearity::parse("expr:u;a=1").unwrap();
        let err = remainder_terms(&nl, 3, 5.0, 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("R0"), "{msg}");
    }

    #[test]
    fn evaluator_rejects_bad_dimension_and_base() {
        let nl = Nonlinearity::power(3.0).unwrap();
        assert!(matches!(
            ThreeTermEvaluator::new(&nl, 0, 0.0, TailReading::default()),
            Err(Error::Domain(_))
        ));
        let shifted = Nonlinearity::parse("expr:u^3;a=1").unwrap();
        assert!(matches!(
            ThreeTermEvaluator::new(&shifted, 3, 0.5, TailReading::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn oversized_distance_reports_a_bracket_failure() {
        // exp: R₀ peaks at √2·2... ≈ 2.83·e⁰ near the threshold; a distance
        // beyond the peak cannot be bracketed.
        let nl = Nonlinearity::exponential();
        let err = invert_three_term(&nl, 3, 1e6, 0.0).unwrap_err();
        assert!(matches!(err, Error::Bracket(_)), "{err}");
    }
}
