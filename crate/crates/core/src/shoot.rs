//! Independent radial shooting solver: integrates u'' + (N−1)u'/r = f(u)
//! from the center, detects blow-up against a ceiling, extrapolates the
//! blow-up radius, and compares the trajectory with the boundary-expansion
//! profiles.
//!
//! The solver is the validation oracle for the fixed-point machinery: it
//! never touches the velocity iteration. The center's 1/r singularity is
//! removed by starting a small offset out with the regular-center series
//! u ≈ α + f(α)r²/(2N). Once u reaches the ceiling, the remaining distance
//! to the blow-up radius is recovered by freezing the energy
//! g = F(u) − (u')²/2 and integrating dt/√(2(F(t) − g)) to infinity, which
//! turns a crude truncation into a second-order-accurate estimate.

use std::rc::Rc;

use crate::criterion::{antiderivative_base, LambdaEvaluator};
use crate::error::{Error, Result};
use crate::expansion::BlowupProfile;
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{
    integrate_adaptive, integrate_ivp_steps, integrate_to_infinity, RunningIntegral, Termination,
};

/// Radius horizon: a trajectory that has not blown up by this radius is
/// reported as not blowing up (R_est = ∞).
const R_MAX: f64 = 1e4;

/// Ceiling on representable antiderivative values when clamping the blow-up
/// ceiling below floating-point overflow.
const BIG_LIMIT: f64 = 1e300;

/// One radial shot from the center.
#[derive(Debug, Clone)]
pub struct ShootResult {
    /// Center value u(0).
    pub alpha: f64,
    /// Space dimension.
    pub n_dim: usize,
    /// Requested blow-up ceiling (the effective ceiling may sit lower when
    /// F would overflow first).
    pub u_cap: f64,
    /// Ceiling actually enforced.
    pub u_cap_effective: f64,
    /// Accepted samples (r, u, du/dr), dense enough for interpolation.
    pub samples: Vec<(f64, f64, f64)>,
    /// Extrapolated blow-up radius; ∞ when the trajectory does not blow up
    /// within the radius horizon.
    pub r_est: f64,
    /// Blow-up detected: the trajectory either reached the ceiling, or
    /// stalled against floating-point resolution while still rising with
    /// a convergent radius extrapolation.
    pub blew_up: bool,
    /// The integrator stalled without a blow-up verdict; the result is
    /// best-effort.
    pub partial: bool,
}

impl ShootResult {
    /// Energy g = F(u) − v²/2 at sample i.
    pub fn energy(&self, nl: &Nonlinearity, i: usize) -> Result<f64> {
        let (_, u, v) = self.samples[i];
        Ok(nl.big_f(u)? - 0.5 * v * v)
    }

    /// u(r) by monotone cubic interpolation of the samples; errors outside
    /// the sampled range.
    pub fn u_at_radius(&self, r: f64) -> Result<f64> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::Domain("trajectory has no samples".into()))?;
        let last = *self.samples.last().expect("nonempty");
        if !(r >= first.0) || !(r <= last.0) {
            return Err(Error::Domain(format!(
                "radius {r} outside the sampled range [{}, {}]",
                first.0, last.0
            )));
        }
        // Rightmost interval whose left end is <= r.
        let idx = self
            .samples
            .partition_point(|&(ri, _, _)| ri <= r)
            .saturating_sub(1)
            .min(self.samples.len() - 2);
        let (r0, u0, m0) = self.samples[idx];
        let (r1, u1, m1) = self.samples[idx + 1];
        let h = r1 - r0;
        if h <= 0.0 {
            return Ok(u0);
        }
        // Fritsch–Carlson slope limiting keeps the cubic monotone.
        let s = (u1 - u0) / h;
        let (m0, m1) = if s <= 0.0 {
            (0.0, 0.0)
        } else {
            (m0.clamp(0.0, 3.0 * s), m1.clamp(0.0, 3.0 * s))
        };
        let t = (r - r0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * u0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * u1
            + (t3 - t2) * h * m1)
    }
}

/// Largest ceiling at or below `cap` where both f and F stay finite and
/// below the representability limit.
fn effective_cap(nl: &Nonlinearity, lo_hint: f64, cap: f64) -> Result<f64> {
    let ok = |u: f64| -> bool {
        matches!(nl.f(u), Ok(v) if v.is_finite() && v.abs() < BIG_LIMIT)
            && matches!(nl.big_f(u), Ok(v) if v.is_finite() && v < BIG_LIMIT)
    };
    if ok(cap) {
        return Ok(cap);
    }
    let mut lo = lo_hint;
    if !ok(lo) {
        return Err(Error::Domain(format!(
            "nonlinearity not evaluable at the start value {lo}"
        )));
    }
    let mut hi = cap;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * lo.abs().max(1.0) {
            break;
        }
    }
    Ok(lo * 0.98)
}

/// Blow-up radius extrapolation: r_stop + ∫_{u_stop}^∞ dt/√(2(F(t) − g)).
fn extrapolate_radius(nl: &Nonlinearity, r_stop: f64, u_stop: f64, g_stop: f64) -> Result<f64> {
    let integrand = |t: f64| {
        let big = match nl.big_f(t) {
            Ok(b) => b,
            Err(_) => return f64::NAN,
        };
        if big.is_infinite() {
            return 0.0;
        }
        let rad = 2.0 * (big - g_stop);
        if rad > 0.0 {
            1.0 / rad.sqrt()
        } else {
            f64::NAN
        }
    };
    let tail = integrate_to_infinity(integrand, u_stop, 1e-10)?.require_converged()?;
    Ok(r_stop + tail)
}

/// Integrates the radial ODE from center value α until the solution
/// reaches the ceiling, decays, or exhausts the radius horizon.
pub fn shoot(
    nl: &Nonlinearity,
    n_dim: usize,
    alpha: f64,
    u_cap: f64,
    tol: f64,
) -> Result<ShootResult> {
    if n_dim < 1 {
        return Err(Error::Domain(format!(
            "dimension must be >= 1, got {n_dim}"
        )));
    }
    if !(alpha > nl.a()) {
        return Err(Error::Domain(format!(
            "center value {alpha} must exceed the positivity threshold {}",
            nl.a()
        )));
    }
    if !(u_cap >= 1e6) {
        return Err(Error::Domain(format!(
            "blow-up ceiling must be at least 1e6, got {u_cap}"
        )));
    }
    if !(tol > 0.0) || !(tol < 1e-2) {
        return Err(Error::Domain(format!(
            "tolerance must lie in (0, 1e-2), got {tol}"
        )));
    }
    let cap_eff = effective_cap(nl, alpha, u_cap)?;
    let f_alpha = nl.f(alpha)?;
    let a = nl.a();

    // Regular-center series start removes the 1/r singularity.
    let r0 = tol.sqrt().min(1e-6);
    let u0 = alpha + f_alpha * r0 * r0 / (2.0 * n_dim as f64);
    let v0 = f_alpha * r0 / n_dim as f64;
    let curvature = (n_dim - 1) as f64;
    // NaN on an unevaluable f makes the stepper reject and shrink, so
    // transient overshoots past the representable range self-correct.
    let rhs = |r: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = nl.f(y[0]).unwrap_or(f64::NAN) - curvature * y[1] / r;
    };
    let cap = |_r: f64, y: &[f64]| y[0] >= cap_eff || (y[1] < 0.0 && y[0] < a);
    let traj = integrate_ivp_steps(rhs, &[u0, v0], r0, R_MAX, Some(&cap), tol)?;

    let mut samples = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let s = traj.state(i);
        samples.push((traj.time(i), s[0], s[1]));
    }
    let &(r_last, u_last, v_last) = samples.last().expect("trajectory nonempty");

    let capped = u_last >= cap_eff;
    let stalled = traj.reason == Termination::StepUnderflow;
    // A steep nonlinearity can leave the ceiling unreachable in floating
    // point: the whole remaining climb happens within one ulp of the
    // blow-up radius. A stall while still rising is then the blow-up
    // signature. Either way the verdict comes from the energy
    // extrapolation: its tail integral converges exactly when the
    // trajectory heads to infinity at a finite radius. A ceiling hit with
    // a divergent tail (f too shallow) grows unboundedly without any
    // finite-radius blow-up.
    let mut blew_up = false;
    let mut r_est = f64::INFINITY;
    if capped || (stalled && v_last > 0.0 && u_last > alpha) {
        let g_stop = nl.big_f(u_last)? - 0.5 * v_last * v_last;
        match extrapolate_radius(nl, r_last, u_last, g_stop) {
            Ok(r) => {
                r_est = r;
                blew_up = true;
            }
            Err(e) if capped => {
                log::warn!(
                    "ceiling reached at u = {u_last:.3e} but the radius \
                     extrapolation does not converge ({e}); reporting \
                     unbounded growth without finite-radius blow-up"
                );
            }
            Err(_) => {}
        }
    }
    Ok(ShootResult {
        alpha,
        n_dim,
        u_cap,
        u_cap_effective: cap_eff,
        samples,
        r_est,
        blew_up,
        partial: stalled && !blew_up,
    })
}

/// Bisects the center value until the extrapolated blow-up radius matches
/// the target within `tol`.
pub fn calibrate_alpha(nl: &Nonlinearity, n_dim: usize, target_r: f64, tol: f64) -> Result<f64> {
    if !(target_r > 0.0) || !target_r.is_finite() {
        return Err(Error::Calibration(format!(
            "target radius must be positive and finite, got {target_r}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Calibration(format!(
            "calibration tolerance must be positive, got {tol}"
        )));
    }
    let shoot_tol = 1e-10;
    let radius = |alpha: f64| -> Result<f64> { Ok(shoot(nl, n_dim, alpha, 1e6, shoot_tol)?.r_est) };
    let a = nl.a();
    // R(α) decreases in α: walk until the target is straddled.
    let mut lo = a + 1.0;
    let mut r_lo = radius(lo)?;
    let mut steps = 0usize;
    while r_lo <= target_r {
        let next = a + (lo - a) / 2.0;
        steps += 1;
        if !(next < lo) || steps > 60 {
            return Err(Error::Calibration(format!(
                "no center value below {lo} reaches radius {target_r}"
            )));
        }
        lo = next;
        r_lo = radius(lo)?;
    }
    let mut hi = lo;
    let mut r_hi = r_lo;
    steps = 0;
    while r_hi >= target_r {
        hi = a + (hi - a) * 2.0;
        steps += 1;
        if steps > 60 {
            return Err(Error::Calibration(format!(
                "no center value above {lo} brings the radius down to {target_r}"
            )));
        }
        r_hi = radius(hi)?;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r_mid = radius(mid)?;
        if (r_mid - target_r).abs() < tol {
            return Ok(mid);
        }
        if r_mid > target_r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    Err(Error::Calibration(format!(
        "bisection exhausted without meeting |R − {target_r}| < {tol}"
    )))
}

/// Energy diagnostics along a trajectory: rows (u, g, g/((N−1)·G(u))) with
/// G the antiderivative of √(2F) from the base point. The ratio column is
/// absent in one dimension, where the denominator vanishes.
pub fn diagnostics(res: &ShootResult, nl: &Nonlinearity) -> Result<Vec<(f64, f64, Option<f64>)>> {
    let base = antiderivative_base(nl);
    let speed = {
        let nl = nl.clone();
        move |t: f64| match nl.big_f(t) {
            Ok(big) if big >= 0.0 => (2.0 * big).sqrt(),
            _ => f64::NAN,
        }
    };
    let big_g = Rc::new(RunningIntegral::new(speed, base, 1e-10));
    let coeff = (res.n_dim - 1) as f64;
    let stride = (res.samples.len() / 200).max(1);
    let mut rows = Vec::new();
    for (i, &(_, u, v)) in res.samples.iter().enumerate() {
        if i % stride != 0 && i != res.samples.len() - 1 {
            continue;
        }
        let g = nl.big_f(u)? - 0.5 * v * v;
        let ratio = if res.n_dim >= 2 {
            Some(g / (coeff * big_g.eval(u)?))
        } else {
            None
        };
        rows.push((u, g, ratio));
    }
    Ok(rows)
}

/// One row of the shoot-vs-expansion comparison.
#[derive(Debug, Clone)]
pub struct CompareRow {
    /// Boundary distance, measured from the extrapolated radius.
    pub d: f64,
    /// Trajectory value at r = R_est − d; absent when d falls outside the
    /// trajectory's resolution.
    pub u_shoot: Option<f64>,
    /// Expansion profile values u_k(d), one per supplied profile.
    pub u_profiles: Vec<f64>,
    /// u_shoot − u_k per profile (empty when flagged).
    pub gaps: Vec<f64>,
    /// |∫ dt/√(2F)| across each gap — the gap in distance units (empty
    /// when flagged).
    pub normalized_gaps: Vec<f64>,
    /// First-order prediction (N−1)·Λ(u_0(d)) from the starting profile.
    pub predicted_gap: f64,
    /// d fell outside the trajectory's sampled range.
    pub flagged: bool,
}

/// Compares a calibrated trajectory against expansion profiles at a grid of
/// boundary distances. The first profile must be the starting (k = 0)
/// profile: it anchors the first-order gap prediction. Distances are taken
/// from the extrapolated radius, so a small calibration offset in R does
/// not bias the comparison.
pub fn compare_to_expansion(
    res: &ShootResult,
    profiles: &[BlowupProfile<'_>],
    d_grid: &[f64],
) -> Result<Vec<CompareRow>> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Domain("comparison needs at least one expansion profile".into()))?;
    if first.k() != 0 {
        return Err(Error::Domain(format!(
            "the first profile must be the starting iterate (k = 0), got k = {}",
            first.k()
        )));
    }
    if !res.blew_up || !res.r_est.is_finite() {
        return Err(Error::Domain(
            "comparison needs a trajectory that blew up with a finite \
             extrapolated radius"
                .into(),
        ));
    }
    let nl = first.velocity().nonlinearity();
    for p in profiles {
        if p.velocity().nonlinearity().spec_text() != nl.spec_text() {
            return Err(Error::Domain(
                "all profiles must share the trajectory's nonlinearity".into(),
            ));
        }
    }
    let lambda = LambdaEvaluator::new(nl);
    let coeff = (res.n_dim - 1) as f64;
    let speed = |t: f64| match nl.big_f(t) {
        Ok(big) if big > 0.0 => {
            let s = (2.0 * big).sqrt();
            if s.is_infinite() {
                f64::NAN
            } else {
                s
            }
        }
        _ => f64::NAN,
    };
    let (r_first, _, _) = *res.samples.first().expect("nonempty");
    let (r_last, _, _) = *res.samples.last().expect("nonempty");
    let mut rows = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        if !(d > 0.0) {
            return Err(Error::Domain(format!(
                "boundary distances must be positive, got {d}"
            )));
        }
        let mut u_profiles = Vec::with_capacity(profiles.len());
        for p in profiles {
            u_profiles.push(p.u_at(d)?);
        }
        let predicted_gap = coeff * lambda.lambda_at(u_profiles[0])?;
        let r_query = res.r_est - d;
        if !(r_query >= r_first) || !(r_query <= r_last) {
            rows.push(CompareRow {
                d,
                u_shoot: None,
                u_profiles,
                gaps: Vec::new(),
                normalized_gaps: Vec::new(),
                predicted_gap,
                flagged: true,
            });
            continue;
        }
        let u_shoot = res.u_at_radius(r_query)?;
        let mut gaps = Vec::with_capacity(profiles.len());
        let mut normalized = Vec::with_capacity(profiles.len());
        for &uk in &u_profiles {
            gaps.push(u_shoot - uk);
            let (lo, hi) = if u_shoot < uk {
                (u_shoot, uk)
            } else {
                (uk, u_shoot)
            };
            let dist = if hi > lo {
                integrate_adaptive(speed_recip(&speed), lo, hi, 1e-10)?.require_converged()?
            } else {
                0.0
            };
            normalized.push(dist);
        }
        rows.push(CompareRow {
            d,
            u_shoot: Some(u_shoot),
            u_profiles,
            gaps,
            normalized_gaps: normalized,
            predicted_gap,
            flagged: false,
        });
    }
    Ok(rows)
}

fn speed_recip<'a>(speed: &'a impl Fn(f64) -> f64) -> impl Fn(f64) -> f64 + 'a {
    move |t: f64| {
        let v = speed(t);
        if v > 0.0 {
            1.0 / v
        } else {
            f64::NAN
        }
    }
}
