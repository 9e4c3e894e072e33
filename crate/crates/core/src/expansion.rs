//! The contractive velocity iteration behind boundary blow-up profiles.
//!
//! For Δu = f(u) on the unit ball, radial blow-up solutions near the
//! boundary are described through a "velocity" v(u) — essentially du/dr as
//! a function of height u. The iteration starts from v_0(u) = √(2F(u)) and
//! refines it by
//!
//! ```text
//! v_k(u) = √( 2 ( F(u) − (N−1) ∫_{U0}^u v_{k−1}(t) / r_{k−1}(t) dt ) ),
//! r(t)   = 1 − ∫_t^∞ ds / v_{k−1}(s),
//! ```
//!
//! which is contractive on the ball ‖v/v_0 − 1‖_∞ < ρ = 1/4 once the start
//! height U0 is large enough. Blow-up profiles u(d) at distance d from the
//! boundary are recovered by inverting d = ∫_{u}^∞ dt/v_k.
//!
//! Profiles store the ratio w = v_k/v_0 on a geometric grid; w is
//! interpolated linearly in log u and extrapolated as a constant beyond the
//! grid (where w → 1 anyway). All integrals are adaptive quadrature; node
//! tails are prefix-summed once per profile.

use crate::error::{Error, Result};
use crate::nonlinearity::{KellerOsserman, Nonlinearity};
use crate::numerics::{
    find_root_monotone, integrate_adaptive, integrate_to_infinity, TailIntegral,
};
use std::cell::RefCell;

/// Contraction-ball radius: accepted iterates keep v/v_0 within (1−ρ, 1+ρ).
pub const RHO: f64 = 0.25;
/// Default number of geometric grid nodes.
pub const DEFAULT_GRID_SIZE: usize = 256;
/// Default top-of-grid factor: Umax = 10⁶ · U0 (overflow-clamped).
pub const DEFAULT_UMAX_FACTOR: f64 = 1e6;

/// Relative tolerance for per-panel quadratures inside profiles.
const PANEL_TOL: f64 = 1e-11;
/// Relative tolerance for improper tail integrals.
const TAIL_TOL: f64 = 1e-9;
/// Relative half-width tolerance for profile inversion root finding.
const ROOT_TOL: f64 = 1e-12;

/// Integrates one distance panel to ~`PANEL_TOL` *relative* accuracy.
///
/// Distance panels are far smaller than 1, so the quadrature's
/// `tol · max(1, |value|)` target would leave each with an absolute error
/// floor that accumulates across the suffix sums and gets amplified by the
/// velocity when profiles are inverted. A second pass with the tolerance
/// rescaled to the first pass's value keeps every panel relatively
/// accurate instead.
fn integrate_panel(
    f: impl Fn(f64) -> f64 + Copy,
    lo: f64,
    hi: f64,
) -> Result<crate::numerics::QuadratureResult> {
    let first = integrate_adaptive(f, lo, hi, PANEL_TOL)?;
    let target = PANEL_TOL * first.value.abs();
    if first.error_estimate <= target || target < 1e-290 {
        return Ok(first);
    }
    integrate_adaptive(f, lo, hi, target.max(1e-16))
}

/// One iterate v_k of the velocity scheme, stored as the ratio w = v_k/v_0
/// on a geometric grid over [U0, Umax].
#[derive(Debug, Clone)]
pub struct VelocityProfile {
    nl: Nonlinearity,
    k: usize,
    u0: f64,
    umax: f64,
    grid: Vec<f64>,
    log_grid: Vec<f64>,
    ratio: Vec<f64>,
    /// suffix_tail[i] = ∫_{grid[i]}^∞ dt / v_k(t).
    suffix_tail: Vec<f64>,
}

impl VelocityProfile {
    /// Builds the starting profile v_0 = √(2F) (ratio ≡ 1).
    ///
    /// Requires U0 above the positivity threshold with F(U0) > 0,
    /// Umax ≥ 100·U0 (unless Umax sits at the overflow clamp of
    /// [`default_umax`]), M ≥ 64 nodes, and a convergent growth test —
    /// profiles make no sense for nonlinearities whose blow-up integral
    /// diverges.
    pub fn make_v0(nl: &Nonlinearity, u0: f64, umax: f64, m: usize) -> Result<VelocityProfile> {
        if !(u0 > nl.a()) || !(nl.big_f(u0)? > 0.0) {
            return Err(Error::Domain(format!(
                "start height must satisfy U0 > a = {} with F(U0) > 0, got U0 = {u0}",
                nl.a()
            )));
        }
        if m < 64 {
            return Err(Error::Domain(format!(
                "grid needs at least 64 nodes, got {m}"
            )));
        }
        if umax < 100.0 * u0 {
            // The overflow clamp may legitimately sit below 100·U0 for
            // violently growing nonlinearities; anything else is an error.
            let clamp = default_umax(nl, u0)?;
            if !(umax <= clamp && umax >= clamp * 0.5 && clamp < 100.0 * u0) {
                return Err(Error::Domain(format!(
                    "grid top must satisfy Umax >= 100*U0 = {}, got {umax}",
                    100.0 * u0
                )));
            }
        }
        match nl.keller_osserman(u0, 1e-7)? {
            KellerOsserman::Converges { .. } => {}
            KellerOsserman::Diverges { .. } => {
                return Err(Error::KellerOssermanDivergent { lo: u0 });
            }
            KellerOsserman::Inconclusive { .. } => {
                return Err(Error::Numerics(format!(
                    "growth test could not be certified convergent from {u0}; \
                     refusing to build expansion profiles"
                )));
            }
        }
        let ratio = vec![1.0; m];
        Self::assemble(nl.clone(), 0, u0, umax, ratio)
    }

    /// Shared constructor: builds the geometric grid, validates membership
    /// in the contraction ball, and prefix-sums node tails.
    fn assemble(
        nl: Nonlinearity,
        k: usize,
        u0: f64,
        umax: f64,
        ratio: Vec<f64>,
    ) -> Result<VelocityProfile> {
        let m = ratio.len();
        let step = (umax / u0).ln() / (m - 1) as f64;
        let grid: Vec<f64> = (0..m)
            .map(|i| {
                if i == m - 1 {
                    umax
                } else {
                    u0 * (step * i as f64).exp()
                }
            })
            .collect();
        let log_grid: Vec<f64> = grid.iter().map(|u| u.ln()).collect();

        let mut sup_dev: f64 = 0.0;
        for &w in &ratio {
            sup_dev = sup_dev.max((w - 1.0).abs());
        }
        if sup_dev >= RHO {
            return Err(Error::BallViolation { sup: sup_dev });
        }

        let mut vp = VelocityProfile {
            nl,
            k,
            u0,
            umax,
            grid,
            log_grid,
            ratio,
            suffix_tail: Vec::new(),
        };
        vp.suffix_tail = vp.compute_suffix_tails()?;

        // r(u) = 1 − ∫_u^∞ dt/v must stay in [1/2, 1]; the tail is largest
        // at the left end of the grid.
        let worst = vp.suffix_tail[0];
        if !(0.0..=0.5).contains(&worst) {
            return Err(Error::StartPointTooSmall {
                u_start: u0,
                msg: format!(
                    "distance budget ∫_U0^∞ dt/v = {worst:.6} leaves the \
                     geometric factor r below 1/2; enlarge the start height"
                ),
            });
        }
        Ok(vp)
    }

    fn compute_suffix_tails(&self) -> Result<Vec<f64>> {
        let m = self.grid.len();
        let beyond = self.tail_beyond_grid(self.umax)?;
        let mut suffix = vec![0.0; m];
        suffix[m - 1] = beyond;
        for i in (0..m - 1).rev() {
            let panel = integrate_panel(
                |t| 1.0 / self.velocity_unchecked(t),
                self.grid[i],
                self.grid[i + 1],
            )?;
            if !panel.converged {
                return Err(Error::Numerics(format!(
                    "node-tail panel [{}, {}] did not converge",
                    self.grid[i],
                    self.grid[i + 1]
                )));
            }
            suffix[i] = suffix[i + 1] + panel.value;
        }
        Ok(suffix)
    }

    /// ∫_u^∞ dt/v for u at or beyond the grid top, using the constant-ratio
    /// tail model v ≈ w_M · v_0.
    ///
    /// The tail anchors every suffix sum, so its error must be small
    /// relative to *its own* tiny value — an absolute-floored tolerance here
    /// would bias every inverted profile height by a constant distance.
    /// A second pass with the tolerance rescaled to the first pass's value
    /// keeps the anchor relatively accurate.
    fn tail_beyond_grid(&self, u: f64) -> Result<f64> {
        let w_top = *self.ratio.last().expect("grid is nonempty");
        let pass = |tol: f64| -> Result<TailIntegral> {
            let err_cell: RefCell<Option<Error>> = RefCell::new(None);
            let tail = integrate_to_infinity(
                |t| match self.nl.big_f(t) {
                    Ok(big) if big > 0.0 && big.is_finite() => 1.0 / (2.0 * big).sqrt(),
                    Ok(_) => 0.0,
                    Err(e) => {
                        err_cell.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                },
                u,
                tol,
            );
            if let Some(e) = err_cell.into_inner() {
                return Err(e);
            }
            tail
        };
        let first = match pass(TAIL_TOL)? {
            TailIntegral::Converged(q) => q,
            other => {
                return Err(Error::Numerics(format!(
                    "tail of 1/v beyond the grid top did not converge: {other:?}"
                )))
            }
        };
        let target = TAIL_TOL * first.value.abs();
        if first.error_estimate <= target || target < 1e-290 {
            return Ok(first.value / w_top);
        }
        // Best-effort refinement: the first pass already met the documented
        // tolerance, so a refinement that fails to converge is discarded.
        match pass(target) {
            Ok(TailIntegral::Converged(q)) => Ok(q.value / w_top),
            _ => Ok(first.value / w_top),
        }
    }

    /// Iteration index k.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Start height U0.
    pub fn u0(&self) -> f64 {
        self.u0
    }

    /// Grid top Umax.
    pub fn umax(&self) -> f64 {
        self.umax
    }

    /// Grid nodes.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Ratio values w_i = v_k(u_i)/v_0(u_i).
    pub fn ratio(&self) -> &[f64] {
        &self.ratio
    }

    /// The nonlinearity this profile belongs to.
    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    /// Largest representable boundary distance: ∫_{U0}^∞ dt/v_k.
    pub fn max_distance(&self) -> f64 {
        self.suffix_tail[0]
    }

    /// Ratio w = v_k/v_0 at u, interpolated linearly in log u; constant
    /// beyond either grid end.
    pub fn ratio_at(&self, u: f64) -> f64 {
        let m = self.grid.len();
        if u <= self.grid[0] {
            return self.ratio[0];
        }
        if u >= self.grid[m - 1] {
            return self.ratio[m - 1];
        }
        let lu = u.ln();
        // partition_point: first index with grid value > u.
        let hi = self.grid.partition_point(|&g| g <= u).min(m - 1);
        let lo = hi - 1;
        let t = (lu - self.log_grid[lo]) / (self.log_grid[hi] - self.log_grid[lo]);
        self.ratio[lo] + (self.ratio[hi] - self.ratio[lo]) * t
    }

    /// v_k(u) = w(u) · √(2F(u)).
    pub fn velocity_at(&self, u: f64) -> Result<f64> {
        let big = self.nl.big_f(u)?;
        if big < 0.0 {
            return Err(Error::Domain(format!(
                "velocity undefined where F < 0 (u = {u})"
            )));
        }
        Ok(self.ratio_at(u) * (2.0 * big).sqrt())
    }

    /// Panics-free fast path used inside integrands: any evaluation error
    /// becomes NaN, which the quadrature reports as a numerics error.
    fn velocity_unchecked(&self, u: f64) -> f64 {
        self.velocity_at(u).unwrap_or(f64::NAN)
    }

    /// ∫_u^∞ dt / v_k — the boundary distance at which the profile passes
    /// height u.
    pub fn tail_at(&self, u: f64) -> Result<f64> {
        if u < self.u0 {
            return Err(Error::Domain(format!(
                "tail queries need u >= U0 = {}, got {u}",
                self.u0
            )));
        }
        let m = self.grid.len();
        if u >= self.umax {
            return self.tail_beyond_grid(u);
        }
        let hi = self.grid.partition_point(|&g| g <= u).min(m - 1);
        let short = integrate_panel(|t| 1.0 / self.velocity_unchecked(t), u, self.grid[hi])?;
        Ok(short.value + self.suffix_tail[hi])
    }

    /// One step of the velocity iteration in dimension `n_dim`.
    ///
    /// For N = 1 the correction vanishes and the result is the ratio-one
    /// profile exactly. The radicand 2(F − (N−1)J) must stay positive at
    /// every node (fails with a start-point error when U0 is too small),
    /// and the new ratio must stay in the contraction ball.
    pub fn iterate(&self, n_dim: usize) -> Result<VelocityProfile> {
        if n_dim < 1 {
            return Err(Error::Domain(format!(
                "dimension must be at least 1, got {n_dim}"
            )));
        }
        let m = self.grid.len();
        if n_dim == 1 {
            return Self::assemble(
                self.nl.clone(),
                self.k + 1,
                self.u0,
                self.umax,
                vec![1.0; m],
            );
        }
        let coeff = (n_dim - 1) as f64;

        // J(u_i) = ∫_{U0}^{u_i} v(t)/r(t) dt accumulated panel by panel,
        // with r(t) = 1 − ∫_t^∞ ds/v from this profile.
        let integrand = |t: f64| {
            let v = self.velocity_unchecked(t);
            let r = match self.tail_at(t) {
                Ok(tl) => 1.0 - tl,
                Err(_) => f64::NAN,
            };
            v / r
        };
        let mut ratio = vec![0.0; m];
        ratio[0] = 1.0; // J(U0) = 0
        let mut j_acc = 0.0;
        for (i, slot) in ratio.iter_mut().enumerate().skip(1) {
            let panel = integrate_adaptive(integrand, self.grid[i - 1], self.grid[i], PANEL_TOL)?;
            if !panel.converged {
                return Err(Error::Numerics(format!(
                    "correction panel [{}, {}] did not converge",
                    self.grid[i - 1],
                    self.grid[i]
                )));
            }
            j_acc += panel.value;
            let big = self.nl.big_f(self.grid[i])?;
            let radicand = if big.is_finite() {
                1.0 - coeff * j_acc / big
            } else {
                // F overflowed: the correction is negligible there.
                1.0
            };
            if radicand <= 0.0 {
                return Err(Error::StartPointTooSmall {
                    u_start: self.u0,
                    msg: format!(
                        "iteration radicand turned nonpositive at u = {} \
                         (correction {:.6e} vs F = {:.6e}); enlarge the start height",
                        self.grid[i],
                        coeff * j_acc,
                        big
                    ),
                });
            }
            *slot = radicand.sqrt();
        }
        Self::assemble(self.nl.clone(), self.k + 1, self.u0, self.umax, ratio)
    }

    /// Inverts d = ∫_u^∞ dt/v_k for u.
    ///
    /// Valid for 0 < d ≤ [`max_distance`](Self::max_distance); the result
    /// reproduces d to ~1e-10 relative when fed back through
    /// [`tail_at`](Self::tail_at).
    pub fn invert(&self, d: f64) -> Result<f64> {
        let d_max = self.max_distance();
        if !(d > 0.0) || d > d_max {
            return Err(Error::Domain(format!(
                "distance must lie in (0, {d_max:.6e}], got {d:.6e}"
            )));
        }
        let m = self.grid.len();
        if d <= self.suffix_tail[m - 1] {
            // Height beyond the grid top: solve on the tail model.
            let mut hi = self.umax * 2.0;
            let mut guard = 0;
            while self.tail_beyond_grid(hi)? > d {
                hi *= 2.0;
                guard += 1;
                if guard > 60 {
                    return Err(Error::Numerics(
                        "failed to bracket a profile height beyond the grid".into(),
                    ));
                }
            }
            return find_root_monotone(
                |u| match self.tail_beyond_grid(u) {
                    Ok(t) => t - d,
                    Err(_) => f64::NAN,
                },
                self.umax,
                hi,
                ROOT_TOL,
            );
        }
        // suffix_tail is strictly decreasing; find the panel containing d.
        // partition_point over decreasing data: first index with tail < d.
        let hi = self
            .suffix_tail
            .partition_point(|&t| t >= d)
            .clamp(1, m - 1);
        let lo = hi - 1;
        let base = self.suffix_tail[hi];
        let h = |u: f64| {
            let short = integrate_panel(|t| 1.0 / self.velocity_unchecked(t), u, self.grid[hi]);
            match short {
                Ok(q) => q.value + base - d,
                Err(_) => f64::NAN,
            }
        };
        find_root_monotone(h, self.grid[lo], self.grid[hi], ROOT_TOL)
    }
}

/// Largest sensible grid top for a start height: 10⁶·U0, clamped below the
/// height where F overflows double precision.
pub fn default_umax(nl: &Nonlinearity, u0: f64) -> Result<f64> {
    let target = DEFAULT_UMAX_FACTOR * u0;
    let finite_at = |u: f64| matches!(nl.big_f(u), Ok(v) if v < 1e300);
    if finite_at(target) {
        return Ok(target);
    }
    // Bisect the overflow boundary, then back off.
    let mut lo = u0;
    let mut hi = target;
    if !finite_at(lo) {
        return Err(Error::Numerics(format!(
            "antiderivative already overflows at the start height {u0}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if finite_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo * 0.98)
}

/// Picks the smallest start height U0 from the doubling scan {1, 2, 4, …}
/// such that (i) the distance budget ∫_{U0}^∞ dt/v_0 stays at or below
/// (1−ρ)/2 = 0.375 and (ii) the first iterate in dimension `n_dim` deviates
/// from v_0 by at most ρ/2 = 0.125 in ratio.
///
/// The scan gives up at 2^40. Candidates at or below the positivity
/// threshold (or with F ≤ 0) are skipped.
pub fn choose_u0(nl: &Nonlinearity, n_dim: usize) -> Result<f64> {
    const SCAN_GRID: usize = 128;
    let budget_cap = (1.0 - RHO) / 2.0;
    let deviation_cap = RHO / 2.0;
    let mut u0 = 1.0f64;
    for _ in 0..=40 {
        if u0 > nl.a() && matches!(nl.big_f(u0), Ok(v) if v > 0.0) {
            if let Some(budget) = v0_distance_budget(nl, u0)? {
                if budget <= budget_cap && first_iterate_ok(nl, n_dim, u0, SCAN_GRID, deviation_cap)
                {
                    return Ok(u0);
                }
            }
        }
        u0 *= 2.0;
    }
    Err(Error::Numerics(
        "no start height up to 2^40 satisfied the distance-budget and \
         first-iterate conditions"
            .into(),
    ))
}

/// ∫_{u0}^∞ dt/√(2F), or None when the tail cannot be certified convergent.
fn v0_distance_budget(nl: &Nonlinearity, u0: f64) -> Result<Option<f64>> {
    let err_cell: RefCell<Option<Error>> = RefCell::new(None);
    let tail = integrate_to_infinity(
        |t| match nl.big_f(t) {
            Ok(big) if big > 0.0 && big.is_finite() => 1.0 / (2.0 * big).sqrt(),
            Ok(_) => 0.0,
            Err(e) => {
                err_cell.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        u0,
        TAIL_TOL,
    );
    if let Some(e) = err_cell.into_inner() {
        return Err(e);
    }
    Ok(match tail? {
        TailIntegral::Converged(q) => Some(q.value),
        _ => None,
    })
}

fn first_iterate_ok(nl: &Nonlinearity, n_dim: usize, u0: f64, m: usize, cap: f64) -> bool {
    let Ok(umax) = default_umax(nl, u0) else {
        return false;
    };
    let Ok(v0) = VelocityProfile::make_v0(nl, u0, umax, m) else {
        return false;
    };
    match v0.iterate(n_dim) {
        Ok(v1) => v1.ratio().iter().all(|&w| (w - 1.0).abs() <= cap),
        Err(_) => false,
    }
}

/// Outcome of running the velocity iteration to (attempted) convergence.
#[derive(Debug, Clone)]
pub struct Convergence {
    /// v_0, v_1, …, v_K in order.
    pub profiles: Vec<VelocityProfile>,
    /// deltas[k−1] = sup_i |w_k(u_i)/w_{k−1}(u_i) − 1|.
    pub deltas: Vec<f64>,
    /// Whether the deltas decayed geometrically (each ≤ 0.95 × predecessor).
    pub geometric: bool,
    /// Whether the stop was triggered by the tolerance (vs the cap kmax).
    pub converged: bool,
    /// The start height actually used (doubled once on auto-retry).
    pub u0: f64,
}

/// Runs the velocity iteration from start height `u0` until the sup-ratio
/// change drops below `tol` or `kmax` iterations have been taken, with the
/// default grid. A nonpositive-radicand failure is retried once with U0
/// doubled before surfacing.
///
/// Three consecutive non-decreasing deltas abort with a contraction-failure
/// error: the operator is plainly not contracting from this start height.
pub fn iterate_to_convergence(
    nl: &Nonlinearity,
    n_dim: usize,
    u0: f64,
    tol: f64,
    kmax: usize,
) -> Result<Convergence> {
    let umax = default_umax(nl, u0)?;
    iterate_to_convergence_with(nl, n_dim, u0, umax, DEFAULT_GRID_SIZE, tol, kmax)
}

/// As [`iterate_to_convergence`], with explicit grid parameters.
pub fn iterate_to_convergence_with(
    nl: &Nonlinearity,
    n_dim: usize,
    u0: f64,
    umax: f64,
    m: usize,
    tol: f64,
    kmax: usize,
) -> Result<Convergence> {
    if kmax < 1 {
        return Err(Error::Domain(format!(
            "kmax must be at least 1, got {kmax}"
        )));
    }
    match run_iteration(nl, n_dim, u0, umax, m, tol, kmax) {
        Err(Error::StartPointTooSmall { .. }) => {
            let u0 = u0 * 2.0;
            let umax = default_umax(nl, u0)?;
            run_iteration(nl, n_dim, u0, umax, m, tol, kmax)
        }
        other => other,
    }
}

fn run_iteration(
    nl: &Nonlinearity,
    n_dim: usize,
    u0: f64,
    umax: f64,
    m: usize,
    tol: f64,
    kmax: usize,
) -> Result<Convergence> {
    let mut profiles = vec![VelocityProfile::make_v0(nl, u0, umax, m)?];
    let mut deltas: Vec<f64> = Vec::new();
    let mut converged = false;
    for _k in 1..=kmax {
        let prev = profiles.last().expect("at least v_0 present");
        let next = prev.iterate(n_dim)?;
        let delta = prev
            .ratio()
            .iter()
            .zip(next.ratio())
            .map(|(&a, &b)| (b / a - 1.0).abs())
            .fold(0.0f64, f64::max);
        deltas.push(delta);
        profiles.push(next);
        log::info!("iteration {_k}: sup ratio change {delta:.3e}");
        if deltas.len() >= 3 {
            let n = deltas.len();
            if deltas[n - 1] >= deltas[n - 2] && deltas[n - 2] >= deltas[n - 3] {
                return Err(Error::ContractionFailure {
                    deltas: deltas.clone(),
                });
            }
        }
        if delta < tol {
            converged = true;
            break;
        }
    }
    let geometric = deltas.len() >= 2
        && deltas
            .windows(2)
            .all(|w| w[1] <= 0.95 * w[0] || w[1] < 1e-14);
    Ok(Convergence {
        profiles,
        deltas,
        geometric,
        converged,
        u0,
    })
}

/// A blow-up profile d ↦ u_k(d): the inversion of one velocity iterate,
/// with a cache of solved points.
#[derive(Debug)]
pub struct BlowupProfile<'a> {
    vp: &'a VelocityProfile,
    table: RefCell<Vec<(f64, f64)>>,
}

impl<'a> BlowupProfile<'a> {
    pub fn new(vp: &'a VelocityProfile) -> Self {
        BlowupProfile {
            vp,
            table: RefCell::new(Vec::new()),
        }
    }

    /// Iteration index of the underlying velocity profile.
    pub fn k(&self) -> usize {
        self.vp.k()
    }

    pub fn velocity(&self) -> &VelocityProfile {
        self.vp
    }

    /// u_k(d), cached.
    pub fn u_at(&self, d: f64) -> Result<f64> {
        if let Some(&(_, u)) = self.table.borrow().iter().find(|&&(dc, _)| dc == d) {
            return Ok(u);
        }
        let u = self.vp.invert(d)?;
        let mut table = self.table.borrow_mut();
        table.push((d, u));
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(u)
    }

    /// Cached (d, u) pairs, sorted by d.
    pub fn table(&self) -> Vec<(f64, f64)> {
        self.table.borrow().clone()
    }
}

/// One-dimensional comparison profile φ_c(d): solves
/// ∫_φ^∞ ds/√(2(F(s)+c)) = d directly, without any grid.
///
/// With c = 0 this coincides with the k = 0 profile inversion. Requires
/// c ≥ 0 and d within the representable range (small enough that the height
/// stays above the positivity threshold).
pub fn one_dim_profile(nl: &Nonlinearity, c: f64, d: f64) -> Result<f64> {
    if c < 0.0 {
        return Err(Error::Domain(format!("shift must be nonnegative, got {c}")));
    }
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    let err_cell: RefCell<Option<Error>> = RefCell::new(None);
    // Tail ∫_φ^∞ dt/√(2(F+c)) as a *proper* integral via t = φ/s, refined
    // to near machine precision. Comparing profiles across c means
    // subtracting nearly-equal heights, so the tail must carry no
    // truncation bias and as little quadrature noise as f64 allows.
    let tail = |phi: f64| -> Result<f64> {
        let integrand = |s: f64| {
            let t = phi / s;
            if !t.is_finite() {
                return 0.0;
            }
            match nl.big_f(t) {
                Ok(big) if big + c > 0.0 => {
                    let two = 2.0 * (big + c);
                    if two.is_finite() {
                        (phi / (s * s)) / two.sqrt()
                    } else {
                        0.0
                    }
                }
                Ok(_) => f64::NAN,
                Err(e) => {
                    err_cell.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let first = integrate_adaptive(integrand, 0.0, 1.0, PANEL_TOL)?;
        // The quadrature's roundoff floor on the error estimate is
        // ~50·ε·∫|g|, so ask for a few times that — lower targets never
        // converge and burn the whole subdivision budget.
        let target = 5e-14 * first.value.abs();
        if first.error_estimate <= target || target < 1e-290 {
            return Ok(first.value);
        }
        Ok(integrate_adaptive(integrand, 0.0, 1.0, target)?.value)
    };
    // Bracket the height where the tail equals d, expanding away from a
    // well-conditioned start point (never evaluating right at the
    // threshold, where the tail may be enormous or divergent).
    let a = nl.a();
    let run = || -> Result<f64> {
        let mut lo = a.max(0.0) + 1.0;
        let mut t_lo = tail(lo)?;
        let mut hi = lo;
        let mut t_hi = t_lo;
        let mut guard = 0;
        while t_lo < d {
            // d is farther out than the start point: move toward the
            // threshold. The interval shrinks geometrically; if it
            // collapses the distance is not representable.
            let next = a + (lo - a) / 4.0;
            if next <= a || lo - next < 1e-14 * lo.abs().max(1.0) {
                return Err(Error::Domain(format!(
                    "distance {d:.6e} exceeds the representable range \
                     (0, {t_lo:.6e}]"
                )));
            }
            hi = lo;
            t_hi = t_lo;
            lo = next;
            t_lo = tail(lo)?;
            guard += 1;
            if guard > 200 {
                return Err(Error::Numerics(
                    "failed to bracket the comparison profile height".into(),
                ));
            }
        }
        while t_hi >= d {
            hi *= 2.0;
            t_hi = tail(hi)?;
            guard += 1;
            if guard > 200 {
                return Err(Error::Numerics(
                    "failed to bracket the comparison profile height".into(),
                ));
            }
        }
        // Bisect down to adjacent floats: the c-gaps between comparison
        // profiles shrink like d³, so the root must be pinned to the last
        // representable digit, not to a loose relative tolerance.
        let mut f_lo = t_lo - d;
        let mut f_hi = t_hi - d;
        let mut steps = 0;
        while steps < 200 {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            let fm = tail(mid)? - d;
            if fm.is_nan() {
                return Err(Error::Numerics(format!(
                    "comparison-profile tail evaluated to NaN at u = {mid}"
                )));
            }
            if fm >= 0.0 {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
                f_hi = fm;
            }
            steps += 1;
        }
        Ok(if f_lo.abs() <= f_hi.abs() { lo } else { hi })
    };
    let result = run();
    if let Some(e) = err_cell.into_inner() {
        return Err(e);
    }
    result
}

/// One row of a profile comparison at boundary distance d.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGap {
    pub d: f64,
    pub u_a: f64,
    pub u_b: f64,
    /// |u_a − u_b|.
    pub gap: f64,
    /// ∫ du/v_0 across the gap — the natural scale of the iteration.
    pub normalized_gap: f64,
}

/// Compares two blow-up profiles of the same nonlinearity across a grid of
/// boundary distances.
pub fn compare_profiles(
    pa: &BlowupProfile<'_>,
    pb: &BlowupProfile<'_>,
    d_grid: &[f64],
) -> Result<Vec<ProfileGap>> {
    let nl_a = pa.velocity().nonlinearity();
    let nl_b = pb.velocity().nonlinearity();
    if nl_a.spec_text() != nl_b.spec_text() {
        return Err(Error::Domain(format!(
            "profiles belong to different nonlinearities: `{}` vs `{}`",
            nl_a.spec_text(),
            nl_b.spec_text()
        )));
    }
    let mut rows = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        let u_a = pa.u_at(d)?;
        let u_b = pb.u_at(d)?;
        let (lo, hi) = if u_a <= u_b { (u_a, u_b) } else { (u_b, u_a) };
        let normalized_gap = if lo == hi {
            0.0
        } else {
            let err_cell: RefCell<Option<Error>> = RefCell::new(None);
            let q = integrate_adaptive(
                |t| match nl_a.big_f(t) {
                    Ok(big) if big > 0.0 => 1.0 / (2.0 * big).sqrt(),
                    Ok(_) => f64::NAN,
                    Err(e) => {
                        err_cell.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                },
                lo,
                hi,
                PANEL_TOL,
            );
            if let Some(e) = err_cell.into_inner() {
                return Err(e);
            }
            q?.value
        };
        rows.push(ProfileGap {
            d,
            u_a,
            u_b,
            gap: (u_a - u_b).abs(),
            normalized_gap,
        });
    }
    Ok(rows)
}
