//! Nonlinearities f for Δu = f(u): builtin families, direct antiderivative
//! specifications, and parsed expressions, with the growth test that decides
//! whether blow-up boundary profiles exist at all.
//!
//! A specification string takes one of four forms:
//!
//! * `pow:<p>` — f(u) = u^p with p > 1, F(t) = t^(p+1)/(p+1);
//! * `exp` — f(u) = e^u, F(t) = e^t;
//! * `F:<expression in t>` — the antiderivative is given directly and f is
//!   recovered by central differences;
//! * `expr:<expression in u>[;a=<real>]` — f is given; F(t) = ∫_a^t f(s) ds
//!   by adaptive quadrature with checkpoints memoized every decade. When
//!   `;a=` is absent, the threshold is found by scanning t = 0, 1, 2, … up
//!   to 10⁴ for the first integer where f(t) > 0 and f stays nonnegative on
//!   the sampled geometric grid beyond it.
//!
//! The builtin power family deliberately uses base point 0 — so F(t) =
//! t^(p+1)/(p+1) even though f(0) = 0 — and the exponential fixes F(t) =
//! e^t. Additive constants in F do not affect boundary asymptotics, and the
//! clean closed forms enable exact cross-checks.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numerics::{integrate_adaptive, integrate_to_infinity, TailIntegral};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Mutex;

/// Which family a nonlinearity belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    /// f(u) = scale · u^p. Parsed specifications always have scale 1;
    /// [`Nonlinearity::power_normalized`] sets scale (p+1)/2 so that
    /// F(t) = t^(p+1)/2 exactly.
    Power { p: f64, scale: f64 },
    /// f(u) = e^u.
    Exponential,
    /// F given directly; f is F′ by central differences.
    DirectF(Expr),
    /// f given as an expression; F by quadrature from the threshold.
    Expression(Expr),
}

/// Verdict of the growth test ∫ dt/√F(t).
#[derive(Debug, Clone, PartialEq)]
pub enum KellerOsserman {
    /// The integral converges: blow-up boundary profiles exist.
    Converges {
        value: f64,
        error_estimate: f64,
        cutoff: f64,
    },
    /// Successive doubling panels failed to decay: the integral diverges.
    Diverges { cutoff: f64 },
    /// The scheme could not certify either way (oscillation or budget).
    Inconclusive { partial: f64, cutoff: f64 },
}

/// A validated nonlinearity: f, its antiderivative F, and the positivity
/// threshold `a`.
///
/// Values are immutable after construction; the internal quadrature
/// checkpoint ladder is guarded by a mutex, so shared concurrent reads are
/// safe.
#[derive(Debug)]
pub struct Nonlinearity {
    kind: Kind,
    a: f64,
    spec: String,
    /// Memoized F checkpoints at t = a + 10^k for the quadrature-backed
    /// kinds, keyed by k.
    ladder: Mutex<BTreeMap<i32, f64>>,
}

impl Clone for Nonlinearity {
    fn clone(&self) -> Self {
        Nonlinearity {
            kind: self.kind.clone(),
            a: self.a,
            spec: self.spec.clone(),
            ladder: Mutex::new(self.ladder.lock().unwrap().clone()),
        }
    }
}

/// Relative tolerance for the quadrature behind expression-kind F.
const F_QUAD_TOL: f64 = 1e-10;
/// Geometric validation grid size: t = a+1, 2(a+1), …, 2^20 (a+1).
const GRID_DOUBLINGS: u32 = 20;

impl Nonlinearity {
    /// Parses a specification string (see the module docs for the forms).
    pub fn parse(spec: &str) -> Result<Self> {
        let trimmed = spec.trim();
        if trimmed == "exp" {
            return Self::validated(Kind::Exponential, 0.0, "exp".into());
        }
        if let Some(body) = trimmed.strip_prefix("pow:") {
            let p: f64 = body.trim().parse().map_err(|_| Error::Parse {
                pos: 4,
                msg: format!("invalid power exponent `{body}`"),
            })?;
            return Self::power(p);
        }
        if let Some(body) = trimmed.strip_prefix("F:") {
            let expr = offset_parse(body, "t", 2)?;
            let nl = Nonlinearity {
                kind: Kind::DirectF(expr),
                a: 0.0,
                spec: trimmed.to_string(),
                ladder: Mutex::new(BTreeMap::new()),
            };
            let a = nl.scan_threshold()?;
            return Self::validated(nl.kind, a, trimmed.to_string());
        }
        if let Some(body) = trimmed.strip_prefix("expr:") {
            let (expr_text, a_clause) = match body.split_once(';') {
                Some((e, rest)) => (e, Some(rest)),
                None => (body, None),
            };
            let expr = offset_parse(expr_text, "u", 5)?;
            let a = match a_clause {
                Some(rest) => {
                    let rest = rest.trim();
                    let Some(v) = rest.strip_prefix("a=") else {
                        return Err(Error::Parse {
                            pos: 5 + expr_text.len() + 1,
                            msg: format!("expected `a=<real>` after `;`, got `{rest}`"),
                        });
                    };
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        pos: 5 + expr_text.len() + 1,
                        msg: format!("invalid threshold `{v}`"),
                    })?
                }
                None => {
                    let probe = Nonlinearity {
                        kind: Kind::Expression(expr.clone()),
                        a: 0.0,
                        spec: trimmed.to_string(),
                        ladder: Mutex::new(BTreeMap::new()),
                    };
                    probe.scan_threshold()?
                }
            };
            return Self::validated(Kind::Expression(expr), a, trimmed.to_string());
        }
        Err(Error::Parse {
            pos: 0,
            msg: "expected `pow:<p>`, `exp`, `F:<expr>`, or `expr:<expr>[;a=<real>]`".into(),
        })
    }

    /// Builtin power family f(u) = u^p, p > 1.
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::Domain(format!(
                "power exponent must satisfy p > 1, got {p}"
            )));
        }
        Self::validated(Kind::Power { p, scale: 1.0 }, 0.0, format!("pow:{p}"))
    }

    /// Power family rescaled so F(t) = t^(p+1)/2 exactly: f(u) =
    /// ((p+1)/2) u^p. With this normalization √(2F(u)) = u^((p+1)/2).
    pub fn power_normalized(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::Domain(format!(
                "power exponent must satisfy p > 1, got {p}"
            )));
        }
        let scale = (p + 1.0) / 2.0;
        Self::validated(
            Kind::Power { p, scale },
            0.0,
            format!("pow:{p};scale={scale}"),
        )
    }

    /// Builtin exponential f(u) = e^u.
    pub fn exponential() -> Self {
        Self::validated(Kind::Exponential, 0.0, "exp".into())
            .expect("builtin exponential always validates")
    }

    fn validated(kind: Kind, a: f64, spec: String) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Domain(format!("threshold a = {a} is not finite")));
        }
        let nl = Nonlinearity {
            kind,
            a,
            spec,
            ladder: Mutex::new(BTreeMap::new()),
        };
        nl.validate()?;
        Ok(nl)
    }

    /// The positivity threshold.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// The family tag.
    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// The originating specification string.
    pub fn spec_text(&self) -> &str {
        &self.spec
    }

    /// f(u). For the direct-antiderivative kind this is a central
    /// difference of F, accurate to roughly h² with h ≈ 10⁻⁵ max(1, |u|).
    pub fn f(&self, u: f64) -> Result<f64> {
        match &self.kind {
            Kind::Power { p, scale } => {
                if u < 0.0 {
                    return Err(Error::Domain(format!(
                        "power nonlinearity needs u >= 0, got {u}"
                    )));
                }
                Ok(scale * u.powf(*p))
            }
            Kind::Exponential => Ok(u.exp()),
            Kind::DirectF(expr) => {
                let h = 1e-5 * u.abs().max(1.0);
                let hi = expr.eval(u + h)?;
                let lo = expr.eval(u - h)?;
                Ok((hi - lo) / (2.0 * h))
            }
            Kind::Expression(expr) => expr.eval(u),
        }
    }

    /// F(t), the antiderivative of f with F(a) = 0 for expression kind
    /// (closed form for builtins, the given expression for direct-F).
    pub fn big_f(&self, t: f64) -> Result<f64> {
        match &self.kind {
            Kind::Power { p, scale } => {
                if t < 0.0 {
                    return Err(Error::Domain(format!(
                        "power antiderivative needs t >= 0, got {t}"
                    )));
                }
                Ok(scale * t.powf(p + 1.0) / (p + 1.0))
            }
            Kind::Exponential => Ok(t.exp()),
            Kind::DirectF(expr) => expr.eval(t),
            Kind::Expression(_) => self.big_f_quadrature(t),
        }
    }

    /// Quadrature-backed F for the expression kind, memoizing checkpoints
    /// at t = a + 10^k so repeated far-tail evaluations stay local.
    fn big_f_quadrature(&self, t: f64) -> Result<f64> {
        if t < self.a {
            return Err(Error::Domain(format!(
                "antiderivative evaluated below its base point: t = {t} < a = {}",
                self.a
            )));
        }
        if t == self.a {
            return Ok(0.0);
        }
        let span = t - self.a;
        if span <= 1.0 {
            return self.integrate_f(self.a, t);
        }
        // Largest k with a + 10^k <= t.
        let k_max = span.log10().floor() as i32;
        let mut ladder = self.ladder.lock().unwrap();
        // Extend the ladder up to k_max.
        let mut have_k: i32 = match ladder.range(..=k_max).next_back() {
            Some((&k, _)) => k,
            None => {
                let first = self.integrate_f(self.a, self.a + 1.0)?;
                ladder.insert(0, first);
                0
            }
        };
        while have_k < k_max {
            let from = self.a + 10f64.powi(have_k);
            let to = self.a + 10f64.powi(have_k + 1);
            let base = *ladder.get(&have_k).expect("ladder rung exists");
            let next = base + self.integrate_f(from, to)?;
            ladder.insert(have_k + 1, next);
            have_k += 1;
        }
        let base = *ladder.get(&k_max).expect("ladder rung exists");
        drop(ladder);
        Ok(base + self.integrate_f(self.a + 10f64.powi(k_max), t)?)
    }

    /// Adaptive quadrature of f over [lo, hi] with evaluation errors
    /// surfaced faithfully.
    fn integrate_f(&self, lo: f64, hi: f64) -> Result<f64> {
        let first_err: RefCell<Option<Error>> = RefCell::new(None);
        let g = |s: f64| match self.f(s) {
            Ok(v) => v,
            Err(e) => {
                first_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        let q = integrate_adaptive(g, lo, hi, F_QUAD_TOL);
        if let Some(e) = first_err.into_inner() {
            return Err(e);
        }
        let q = q?;
        if !q.converged {
            return Err(Error::Numerics(format!(
                "antiderivative quadrature on [{lo}, {hi}] did not converge \
                 (error estimate {:.3e})",
                q.error_estimate
            )));
        }
        Ok(q.value)
    }

    /// Growth test: ∫_lo^∞ dt/√F(t), exactly as written — no factor 2.
    ///
    /// Requires lo > a and F(lo) > 0. Convergence means blow-up boundary
    /// profiles exist; divergence (panel contributions failing to decay
    /// over 20 doublings) means they do not; oscillation or an exhausted
    /// budget is reported as inconclusive, never as a silent number.
    pub fn keller_osserman(&self, lo: f64, tol: f64) -> Result<KellerOsserman> {
        // F must be positive from lo on; since F is nondecreasing it
        // suffices to check the left end. (For the builtin exponential F is
        // positive everywhere, so lo may even sit at or below the
        // threshold.)
        let f_lo = self.big_f(lo)?;
        if f_lo <= 0.0 {
            return Err(Error::Domain(format!(
                "growth test needs F(lo) > 0, got F({lo}) = {f_lo}"
            )));
        }
        let first_err: RefCell<Option<Error>> = RefCell::new(None);
        let g = |t: f64| match self.big_f(t) {
            Ok(big) if big > 0.0 => 1.0 / big.sqrt(),
            Ok(_) => 0.0,
            Err(e) => {
                first_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        let tail = integrate_to_infinity(g, lo, tol);
        if let Some(e) = first_err.into_inner() {
            return Err(e);
        }
        Ok(match tail? {
            TailIntegral::Converged(q) => KellerOsserman::Converges {
                value: q.value,
                error_estimate: q.error_estimate,
                cutoff: q.cutoff_used.unwrap_or(f64::INFINITY),
            },
            TailIntegral::Diverged { cutoff } => KellerOsserman::Diverges { cutoff },
            TailIntegral::Inconclusive { partial, cutoff } => {
                KellerOsserman::Inconclusive { partial, cutoff }
            }
        })
    }

    /// Scans t = 0, 1, 2, … ≤ 10⁴ for the first integer threshold with
    /// f(t) > 0 and f ≥ 0 on the geometric grid beyond it.
    fn scan_threshold(&self) -> Result<f64> {
        'candidates: for t in 0..=10_000u32 {
            let cand = f64::from(t);
            match self.f(cand) {
                Ok(v) if v > 0.0 => {}
                _ => continue,
            }
            // f must stay nonnegative on the sampled grid beyond the
            // candidate; evaluation overflow truncates the grid.
            let mut g = cand + 1.0;
            for _ in 0..=GRID_DOUBLINGS {
                match self.f(g) {
                    Ok(v) if v < 0.0 => continue 'candidates,
                    Ok(_) => {}
                    Err(_) => break,
                }
                g *= 2.0;
            }
            return Ok(cand);
        }
        Err(Error::Threshold(format!(
            "no integer threshold t <= 10000 with f(t) > 0 and f >= 0 beyond it \
             (spec `{}`); supply one explicitly with `;a=<real>`",
            self.spec
        )))
    }

    /// Construction-time validation: positivity at the threshold,
    /// nonnegativity of f and monotonicity of F on a geometric grid, and
    /// (for the expression kind) central-difference consistency of F′
    /// against f.
    fn validate(&self) -> Result<()> {
        // f(a) > 0 where f is meaningful at a. The builtin power family is
        // exempt: its base point 0 has f(0) = 0 by design.
        if !matches!(self.kind, Kind::Power { .. }) {
            let fa = self.f(self.a)?;
            if !(fa > 0.0) {
                return Err(Error::Domain(format!(
                    "f must be positive at the threshold: f({}) = {fa}",
                    self.a
                )));
            }
        }

        // Geometric grid t = a+1, 2(a+1), …, 2^20 (a+1); overflow truncates.
        let mut prev_f_cap: Option<f64> = None;
        let mut t = self.a + 1.0;
        for i in 0..=GRID_DOUBLINGS {
            let fv = match self.f(t) {
                Ok(v) => v,
                Err(_) if i > 0 => break,
                Err(e) => return Err(e),
            };
            if fv < 0.0 {
                return Err(Error::Domain(format!(
                    "f must be nonnegative beyond the threshold: f({t}) = {fv}"
                )));
            }
            let big = match self.big_f(t) {
                Ok(v) => v,
                Err(_) if i > 0 => break,
                Err(e) => return Err(e),
            };
            if let Some(prev) = prev_f_cap {
                if big < prev {
                    return Err(Error::Domain(format!(
                        "antiderivative must be nondecreasing: F({t}) = {big} \
                         dropped below {prev}"
                    )));
                }
            }
            prev_f_cap = Some(big);
            t *= 2.0;
        }

        // Quadrature-backed F must differentiate back to f.
        if matches!(self.kind, Kind::Expression(_)) {
            let mut t = self.a + 1.0;
            for _ in 0..10 {
                let fv = match self.f(t) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                let h = 1e-7 * t.abs().max(1.0);
                // F(t+h) − F(t−h) computed as one short integral to avoid
                // cancellation between two large values.
                let diff = match self.integrate_f(t - h, t + h) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                let deriv = diff / (2.0 * h);
                if (deriv - fv).abs() / fv.abs().max(1.0) >= 1e-6 {
                    return Err(Error::Domain(format!(
                        "antiderivative is inconsistent with f near t = {t}: \
                         F' = {deriv} vs f = {fv}"
                    )));
                }
                t *= 2.0;
            }
        }
        Ok(())
    }
}

/// Parses a sub-expression, shifting error positions by the prefix length
/// so they index into the full specification string.
fn offset_parse(body: &str, var: &str, offset: usize) -> Result<Expr> {
    crate::expr::parse(body, var).map_err(|e| match e {
        Error::Parse { pos, msg } => Error::Parse {
            pos: pos + offset,
            msg,
        },
        other => other,
    })
}
