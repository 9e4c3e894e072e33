//! Initial-value problem integration with an embedded Runge–Kutta 5(4) pair.
//!
//! Step sizes are chosen by a PI controller on the embedded error estimate.
//! A user-supplied cap predicate terminates the run early; the trigger
//! location is refined by step halving so the final sample sits within the
//! requested tolerance of the crossing. Accepted steps are subdivided with
//! cubic Hermite interpolation where needed, so that linear interpolation
//! between stored samples stays within the integration tolerance.

use crate::error::{Error, Result};

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached the requested endpoint.
    Endpoint,
    /// The cap predicate fired; the final sample satisfies it.
    CapReached,
    /// The controller drove the step below machine resolution.
    StepUnderflow,
}

/// Dense record of an integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
    pub reason: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(y);
        self.derivs.extend_from_slice(dy);
    }
}

const STAGES: usize = 7;
// Dormand–Prince 5(4) tableau.
const C: [f64; STAGES] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and 4th-order weights (error estimator).
const E: [f64; STAGES] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Right-hand side of the first-order system: writes dy/dt at (t, y) into
/// the output slice.
pub type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) + 'a;

/// Stopping predicate: integration halts once it returns true at (t, y).
pub type StopWhen<'a> = dyn Fn(f64, &[f64]) -> bool + 'a;

struct Stepper<'a> {
    rhs: &'a Rhs<'a>,
    dim: usize,
    k: Vec<f64>,    // STAGES × dim stage derivatives
    ytmp: Vec<f64>, // scratch state
}

impl<'a> Stepper<'a> {
    fn new(rhs: &'a Rhs<'a>, dim: usize) -> Self {
        Self {
            rhs,
            dim,
            k: vec![0.0; STAGES * dim],
            ytmp: vec![0.0; dim],
        }
    }

    /// One 5th-order step from `(t, y)` with derivative `f0 = rhs(t, y)`.
    /// Writes the new state into `y1` and the embedded error into `err`,
    /// and returns the derivative at the new point (FSAL stage).
    fn step(
        &mut self,
        t: f64,
        y: &[f64],
        f0: &[f64],
        h: f64,
        y1: &mut [f64],
        err: &mut [f64],
    ) -> Result<Vec<f64>> {
        let dim = self.dim;
        self.k[..dim].copy_from_slice(f0);
        for s in 1..STAGES {
            for (i, (slot, &yv)) in self.ytmp.iter_mut().zip(y).enumerate() {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * self.k[j * dim + i];
                }
                *slot = yv + h * acc;
            }
            let (head, tail) = self.k.split_at_mut(s * dim);
            let _ = head;
            (self.rhs)(t + C[s] * h, &self.ytmp, &mut tail[..dim]);
        }
        // Stage 7 of this tableau evaluates at the 5th-order solution, so
        // ytmp now holds y1 and k[6] its derivative.
        y1.copy_from_slice(&self.ytmp);
        for (i, slot) in err.iter_mut().enumerate() {
            let mut e = 0.0;
            for (s, w) in E.iter().enumerate() {
                e += w * self.k[s * dim + i];
            }
            *slot = h * e;
        }
        let fsal = self.k[(STAGES - 1) * dim..].to_vec();
        for v in y1.iter().chain(fsal.iter()) {
            if !v.is_finite() {
                return Err(Error::Numerics(format!(
                    "ODE state not finite near t = {t:.6e}"
                )));
            }
        }
        Ok(fsal)
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], atol: f64, rtol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / err.len() as f64).sqrt()
}

/// Pushes `(t1, y1)` onto the trajectory, inserting Hermite midpoints first
/// wherever straight-line interpolation across the step would exceed the
/// integration tolerance.
#[allow(clippy::too_many_arguments)]
fn push_dense(
    traj: &mut Trajectory,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t1: f64,
    y1: &[f64],
    f1: &[f64],
    atol: f64,
    rtol: f64,
    depth: usize,
) {
    let h = t1 - t0;
    let dim = y0.len();
    let mut needs_split = false;
    if depth > 0 {
        for i in 0..dim {
            // Cubic-Hermite midpoint minus linear midpoint.
            let dev = (h * (f0[i] - f1[i]) / 8.0).abs();
            let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
            if dev > sc {
                needs_split = true;
                break;
            }
        }
    }
    if needs_split {
        let tm = t0 + 0.5 * h;
        let mut ym = vec![0.0; dim];
        let mut fm = vec![0.0; dim];
        for i in 0..dim {
            ym[i] = 0.5 * (y0[i] + y1[i]) + h * (f0[i] - f1[i]) / 8.0;
            // Hermite derivative at the midpoint.
            fm[i] = 1.5 * (y1[i] - y0[i]) / h - 0.25 * (f0[i] + f1[i]);
        }
        push_dense(traj, t0, y0, f0, tm, &ym, &fm, atol, rtol, depth - 1);
        push_dense(traj, tm, &ym, &fm, t1, y1, f1, atol, rtol, depth - 1);
    } else {
        traj.push(t1, y1, f1);
    }
}

/// Integrates `y' = rhs(t, y)` from `(t0, y0)` until `t_end`, a cap event,
/// or step underflow.
///
/// `cap` is checked after every accepted step; once it fires, the crossing
/// is localized by step halving until the last cap-free point and the first
/// capped point are within `tol * max(1, |t|)` of each other, and the capped
/// point becomes the final sample. The stored samples are dense enough that
/// linear interpolation between them stays within the integration tolerance.
pub fn integrate_ivp(
    rhs: impl Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    t0: f64,
    t_end: f64,
    cap: Option<&StopWhen<'_>>,
    tol: f64,
) -> Result<Trajectory> {
    integrate_ivp_impl(&rhs, y0, t0, t_end, cap, tol, true)
}

/// Like [`integrate_ivp`] but stores only the accepted steps, without the
/// dense fill-in. The samples still carry exact derivatives, so cubic
/// Hermite interpolation between them recovers the solution to integration
/// accuracy; only straight-line interpolation loses precision. Intended for
/// long runs where the dense record would dominate memory.
pub fn integrate_ivp_steps(
    rhs: impl Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    t0: f64,
    t_end: f64,
    cap: Option<&StopWhen<'_>>,
    tol: f64,
) -> Result<Trajectory> {
    integrate_ivp_impl(&rhs, y0, t0, t_end, cap, tol, false)
}

fn integrate_ivp_impl(
    rhs: &Rhs<'_>,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    cap: Option<&StopWhen<'_>>,
    tol: f64,
    dense: bool,
) -> Result<Trajectory> {
    if !(t_end > t0) {
        return Err(Error::Domain(format!(
            "integration needs t_end > t0, got [{t0}, {t_end}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let dim = y0.len();
    let (atol, rtol) = (tol, tol);

    let mut f0 = vec![0.0; dim];
    rhs(t0, y0, &mut f0);
    let mut traj = Trajectory {
        dim,
        times: Vec::new(),
        states: Vec::new(),
        derivs: Vec::new(),
        reason: Termination::Endpoint,
    };
    traj.push(t0, y0, &f0);

    if let Some(c) = cap {
        if c(t0, y0) {
            traj.reason = Termination::CapReached;
            return Ok(traj);
        }
    }

    let mut stepper = Stepper::new(rhs, dim);
    let mut t = t0;
    let mut y = y0.to_vec();

    // Initial step: small against both the interval and the solution scale.
    let mut scale: f64 = 0.0;
    for i in 0..dim {
        let sc = atol + rtol * y[i].abs();
        scale = scale.max((f0[i] / sc).abs());
    }
    let span = if t_end.is_finite() { t_end - t0 } else { 1.0 };
    let mut h = (0.01 / scale.max(1e-4))
        .min(span)
        .max(1e-10 * span.max(1.0));

    let mut y1 = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut err_prev: f64 = 1.0;

    let max_steps = 20_000_000usize;
    for _ in 0..max_steps {
        if t >= t_end {
            traj.reason = Termination::Endpoint;
            return Ok(traj);
        }
        let resolution = f64::EPSILON * t.abs().max(1.0) * 4.0;
        let mut h_here = h.min(t_end - t);
        if h_here < resolution {
            // Distinguish "the remaining interval is below resolution"
            // (done) from "the controller itself underflowed" (stalled).
            traj.reason = if t_end - t < 2.0 * resolution {
                Termination::Endpoint
            } else {
                Termination::StepUnderflow
            };
            return Ok(traj);
        }
        let fsal = loop {
            match stepper.step(t, &y, &f0, h_here, &mut y1, &mut err) {
                Ok(fsal) => {
                    let en = error_norm(&err, &y, &y1, atol, rtol);
                    if en <= 1.0 {
                        // PI controller (accepted step).
                        let fac = 0.9 * en.max(1e-10).powf(-0.17) * err_prev.powf(0.04);
                        err_prev = en.max(1e-10);
                        h = h_here * fac.clamp(0.2, 6.0);
                        break Some(fsal);
                    }
                    let fac = 0.9 * en.powf(-0.2);
                    h_here *= fac.clamp(0.1, 0.9);
                }
                Err(_) => {
                    // Overflow inside the step: retreat hard.
                    h_here *= 0.25;
                }
            }
            if h_here < f64::EPSILON * t.abs().max(1.0) * 4.0 {
                break None;
            }
        };
        let Some(fsal) = fsal else {
            traj.reason = Termination::StepUnderflow;
            return Ok(traj);
        };

        let t1 = t + h_here;
        if let Some(c) = cap {
            if c(t1, &y1) {
                // Localize the crossing by re-stepping with halved steps
                // from the last cap-free point.
                let (tc, yc, fc) = localize_cap(&mut stepper, c, t, &y, &f0, h_here, tol)?;
                if dense {
                    push_dense(&mut traj, t, &y, &f0, tc, &yc, &fc, atol, rtol, 10);
                } else {
                    traj.push(tc, &yc, &fc);
                }
                traj.reason = Termination::CapReached;
                return Ok(traj);
            }
        }
        if dense {
            push_dense(&mut traj, t, &y, &f0, t1, &y1, &fsal, atol, rtol, 10);
        } else {
            traj.push(t1, &y1, &fsal);
        }
        t = t1;
        y.copy_from_slice(&y1);
        f0 = fsal;
    }
    Err(Error::Numerics(format!(
        "ODE integration exceeded {max_steps} steps"
    )))
}

/// Step-halving event localization. From a cap-free `(t, y)` with the cap
/// known to fire within `h`, returns the first capped sample within
/// `tol * max(1, |t|)` of the crossing.
fn localize_cap(
    stepper: &mut Stepper,
    cap: &dyn Fn(f64, &[f64]) -> bool,
    t: f64,
    y: &[f64],
    f0: &[f64],
    h: f64,
    tol: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let dim = y.len();
    let mut t_lo = t;
    let mut y_lo = y.to_vec();
    let mut f_lo = f0.to_vec();
    let mut width = h;
    let mut y1 = vec![0.0; dim];
    let mut err = vec![0.0; dim];

    while width > tol * t_lo.abs().max(1.0) {
        let half = 0.5 * width;
        if t_lo + half <= t_lo {
            break;
        }
        match stepper.step(t_lo, &y_lo, &f_lo, half, &mut y1, &mut err) {
            Ok(fsal) => {
                if cap(t_lo + half, &y1) {
                    width = half;
                } else {
                    t_lo += half;
                    y_lo.copy_from_slice(&y1);
                    f_lo = fsal;
                    width = half;
                }
            }
            // The half step itself blew up: tighten from the left.
            Err(_) => {
                width = half;
            }
        }
    }
    // Land on the capped side with one final step.
    let mut t_hi = t_lo + width;
    let mut guard = 0;
    loop {
        match stepper.step(t_lo, &y_lo, &f_lo, t_hi - t_lo, &mut y1, &mut err) {
            Ok(fsal) => {
                if cap(t_hi, &y1) || guard >= 60 {
                    return Ok((t_hi, y1, fsal));
                }
                // Cap slid just past the bracket: extend minimally.
                t_hi += width.max(f64::EPSILON * t_hi.abs());
                guard += 1;
            }
            Err(_) => {
                // Cannot even reach t_hi: settle for the cap-free point.
                let f_ret = f_lo.clone();
                return Ok((t_lo, y_lo, f_ret));
            }
        }
        if guard > 200 {
            return Err(Error::Numerics("cap localization failed to settle".into()));
        }
        guard += 1;
    }
}

/// Fixed-step 5th-order integration (no adaptivity, no events). Intended
/// for convergence-order measurements.
pub fn integrate_ivp_fixed(
    rhs: impl Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    t0: f64,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    if !(t_end > t0) || !(h > 0.0) {
        return Err(Error::Domain(
            "fixed-step integration needs t_end > t0 and h > 0".into(),
        ));
    }
    let dim = y0.len();
    let rhs = &rhs as &dyn Fn(f64, &[f64], &mut [f64]);
    let mut stepper = Stepper::new(rhs, dim);
    let mut f0 = vec![0.0; dim];
    rhs(t0, y0, &mut f0);
    let mut traj = Trajectory {
        dim,
        times: Vec::new(),
        states: Vec::new(),
        derivs: Vec::new(),
        reason: Termination::Endpoint,
    };
    traj.push(t0, y0, &f0);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    while t < t_end {
        let step = h.min(t_end - t);
        let fsal = stepper.step(t, &y, &f0, step, &mut y1, &mut err)?;
        t += step;
        y.copy_from_slice(&y1);
        f0 = fsal;
        traj.push(t, &y, &f0);
    }
    Ok(traj)
}
