//! The universal-blow-up-rate functional Λ and nonlinearity classification.
//!
//! For a nonlinearity with antiderivative F, define
//!
//! ```text
//! Λ(u) = √(2F(u)) · ∫_u^∞ [ ∫_base^t √(2F(s)) ds ] / (2F(t))^(3/2) dt .
//! ```
//!
//! When Λ(u) → 0 as u → ∞ every blow-up solution shares one boundary rate
//! ("universal"); when Λ stays bounded away from zero the rate depends on
//! the solution. Classification samples Λ on a geometric grid, fits a
//! log-log slope over the top decade, and applies finite-sample thresholds
//! (artifact choices, tunable): decaying slope with an observed halving ⇒
//! universal; flat slope above a plateau floor ⇒ non-universal; anything
//! else ⇒ inconclusive.
//!
//! The inner integral's lower limit is the antiderivative's base point
//! (0 for the builtin families, the positivity threshold for parsed
//! expressions); it is recorded in the report since the shift it induces is
//! subdominant but nonzero.

use crate::error::{Error, Result};
use crate::expansion::BlowupProfile;
use crate::nonlinearity::{Kind, Nonlinearity};
use crate::numerics::{integrate_to_infinity, RunningIntegral, TailIntegral};

/// Finite-sample classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionThresholds {
    /// Slopes below −slope_cut count as decaying; |slope| ≤ slope_cut as flat.
    pub slope_cut: f64,
    /// A flat Λ must stay at or above this to count as a genuine plateau.
    pub plateau_floor: f64,
}

impl Default for CriterionThresholds {
    fn default() -> Self {
        CriterionThresholds {
            slope_cut: 0.05,
            plateau_floor: 1e-3,
        }
    }
}

/// Classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Λ decays: all blow-up solutions share one boundary rate.
    Universal,
    /// Λ plateaus: the rate is solution-dependent.
    NonUniversal,
    /// Neither behavior could be certified.
    Inconclusive,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Universal => "universal",
            Classification::NonUniversal => "non-universal",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

/// Full record of one classification run.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    /// Sampled (u, Λ(u)) pairs, geometric in u.
    pub samples: Vec<(f64, f64)>,
    /// Least-squares log-log slope over the top decade of samples.
    pub slope: Option<f64>,
    /// Matching intercept (log Λ at log u = 0).
    pub intercept: Option<f64>,
    pub classification: Classification,
    pub thresholds: CriterionThresholds,
    /// Lower limit used for the inner integral.
    pub base_point: f64,
    /// The u at which sampling failed, with the error, when inconclusive
    /// because of a failed sample.
    pub failure: Option<(f64, String)>,
}

/// Memoizing evaluator for Λ: the inner integral ∫_base^t √(2F) is shared
/// across all outer quadrature nodes and across sample points.
pub struct LambdaEvaluator {
    nl: Nonlinearity,
    base: f64,
    inner: RunningIntegral<Box<dyn Fn(f64) -> f64>>,
}

/// Inner-integral lower limit: the antiderivative's base point.
pub fn antiderivative_base(nl: &Nonlinearity) -> f64 {
    match nl.kind() {
        Kind::Power { .. } | Kind::Exponential => 0.0,
        Kind::DirectF(_) | Kind::Expression(_) => nl.a(),
    }
}

impl LambdaEvaluator {
    pub fn new(nl: &Nonlinearity) -> Self {
        let base = antiderivative_base(nl);
        let for_inner = nl.clone();
        let speed: Box<dyn Fn(f64) -> f64> = Box::new(move |s: f64| match for_inner.big_f(s) {
            Ok(big) if big >= 0.0 => (2.0 * big).sqrt(),
            _ => f64::NAN,
        });
        LambdaEvaluator {
            nl: nl.clone(),
            base,
            inner: RunningIntegral::new(speed, base, 1e-11),
        }
    }

    pub fn base_point(&self) -> f64 {
        self.base
    }

    /// Λ(u). Requires u above the base point with F(u) > 0; a
    /// non-convergent outer tail is an explicit error, never a silent
    /// number.
    pub fn lambda_at(&self, u: f64) -> Result<f64> {
        let big_u = self.nl.big_f(u)?;
        if !(u > self.base) || !(big_u > 0.0) || !big_u.is_finite() {
            return Err(Error::Domain(format!(
                "criterion needs u above the base point {} with finite F(u) > 0, \
                 got u = {u}",
                self.base
            )));
        }
        // Scaling the integrand by the final prefactor keeps the running sum
        // at Λ's own magnitude, so the quadrature's absolute floor cannot
        // truncate a small Λ prematurely.
        let pref = (2.0 * big_u).sqrt();
        let integrand = |t: f64| {
            let denom = match self.nl.big_f(t) {
                Ok(big) if big > 0.0 => (2.0 * big).powf(1.5),
                _ => return f64::NAN,
            };
            if denom.is_infinite() {
                // The tail is long since negligible once F overflows.
                return 0.0;
            }
            match self.inner.eval(t) {
                Ok(g) => pref * g / denom,
                Err(_) => f64::NAN,
            }
        };
        let outer = match integrate_to_infinity(integrand, u, 1e-9)? {
            TailIntegral::Converged(q) => q.value,
            TailIntegral::Diverged { cutoff } => {
                return Err(Error::Numerics(format!(
                    "criterion tail from u = {u} diverged (cutoff {cutoff:.3e})"
                )));
            }
            TailIntegral::Inconclusive { cutoff, .. } => {
                return Err(Error::Numerics(format!(
                    "criterion tail from u = {u} could not be certified \
                     (cutoff {cutoff:.3e})"
                )));
            }
        };
        Ok(outer)
    }
}

/// Λ(u) as a one-shot convenience (no memo reuse across calls).
pub fn lambda_at(nl: &Nonlinearity, u: f64) -> Result<f64> {
    LambdaEvaluator::new(nl).lambda_at(u)
}

/// Samples Λ geometrically on [u_lo, u_hi] (requires u_hi ≥ 100·u_lo and at
/// least 16 samples), fits the top-decade log-log slope, and classifies.
pub fn classify(nl: &Nonlinearity, u_lo: f64, u_hi: f64, m: usize) -> Result<CriterionReport> {
    classify_with(nl, u_lo, u_hi, m, CriterionThresholds::default())
}

/// As [`classify`] with explicit thresholds.
pub fn classify_with(
    nl: &Nonlinearity,
    u_lo: f64,
    u_hi: f64,
    m: usize,
    thresholds: CriterionThresholds,
) -> Result<CriterionReport> {
    if !(u_lo > 0.0) || u_hi < 100.0 * u_lo {
        return Err(Error::Domain(format!(
            "classification range needs u_hi >= 100*u_lo > 0, got [{u_lo}, {u_hi}]"
        )));
    }
    if m < 16 {
        return Err(Error::Domain(format!(
            "classification needs at least 16 samples, got {m}"
        )));
    }
    let eval = LambdaEvaluator::new(nl);
    let step = (u_hi / u_lo).ln() / (m - 1) as f64;
    let mut samples = Vec::with_capacity(m);
    for j in 0..m {
        let u = if j == m - 1 {
            u_hi
        } else {
            u_lo * (step * j as f64).exp()
        };
        match eval.lambda_at(u) {
            Ok(l) if l > 0.0 && l.is_finite() => samples.push((u, l)),
            Ok(l) => {
                return Ok(failed_report(
                    samples,
                    thresholds,
                    eval.base_point(),
                    u,
                    format!("nonpositive criterion value {l}"),
                ));
            }
            Err(e) => {
                return Ok(failed_report(
                    samples,
                    thresholds,
                    eval.base_point(),
                    u,
                    e.to_string(),
                ));
            }
        }
    }

    // Least squares in log-log over the top decade of u.
    let cutoff = u_hi / 10.0;
    let top: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(u, _)| u >= cutoff)
        .map(|&(u, l)| (u.ln(), l.ln()))
        .collect();
    let n = top.len() as f64;
    let sx: f64 = top.iter().map(|p| p.0).sum();
    let sy: f64 = top.iter().map(|p| p.1).sum();
    let sxx: f64 = top.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = top.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if top.len() < 2 || denom <= 0.0 {
        return Ok(failed_report(
            samples,
            thresholds,
            eval.base_point(),
            u_hi,
            "too few top-decade samples for a slope fit".into(),
        ));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;

    let lambda_first = samples.first().expect("m >= 16").1;
    let lambda_last = samples.last().expect("m >= 16").1;
    let classification = if slope < -thresholds.slope_cut && lambda_last < 0.5 * lambda_first {
        Classification::Universal
    } else if slope.abs() <= thresholds.slope_cut && lambda_last >= thresholds.plateau_floor {
        Classification::NonUniversal
    } else {
        Classification::Inconclusive
    };

    Ok(CriterionReport {
        samples,
        slope: Some(slope),
        intercept: Some(intercept),
        classification,
        thresholds,
        base_point: eval.base_point(),
        failure: None,
    })
}

fn failed_report(
    samples: Vec<(f64, f64)>,
    thresholds: CriterionThresholds,
    base_point: f64,
    u: f64,
    why: String,
) -> CriterionReport {
    CriterionReport {
        samples,
        slope: None,
        intercept: None,
        classification: Classification::Inconclusive,
        thresholds,
        base_point,
        failure: Some((u, why)),
    }
}

/// The weakened criterion: Λ evaluated along a starting blow-up profile,
/// one row (d, u_0(d), Λ(u_0(d))) per requested boundary distance.
pub fn lambda_along_profile(
    nl: &Nonlinearity,
    profile: &BlowupProfile<'_>,
    d_grid: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    if profile.k() != 0 {
        return Err(Error::Domain(format!(
            "the weakened criterion runs along the starting profile (k = 0), \
             got k = {}",
            profile.k()
        )));
    }
    let eval = LambdaEvaluator::new(nl);
    let mut rows = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        let u = profile.u_at(d)?;
        let l = eval.lambda_at(u)?;
        rows.push((d, u, l));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::VelocityProfile;
    use approx::assert_relative_eq;

    fn pow(p: f64) -> Nonlinearity {
        Nonlinearity::power(p).unwrap()
    }

    #[test]
    fn cubic_power_criterion_is_the_constant_plateau() {
        // F = t⁴/4: inner = t³/(3√2), integrand (2/3)t⁻³, outer u⁻²/3,
        // Λ = √2/6 at every u.
        let eval = LambdaEvaluator::new(&pow(3.0));
        for &u in &[2.0, 50.0, 1000.0] {
            assert_relative_eq!(
                eval.lambda_at(u).unwrap(),
                std::f64::consts::SQRT_2 / 6.0,
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn quintic_power_criterion_decays_like_the_reciprocal() {
        // F = t⁶/6: Λ(u) = √3/(16u).
        let eval = LambdaEvaluator::new(&pow(5.0));
        assert_relative_eq!(
            eval.lambda_at(100.0).unwrap(),
            3f64.sqrt() / 1600.0,
            max_relative = 1e-7
        );
        assert_relative_eq!(
            eval.lambda_at(8.0).unwrap(),
            3f64.sqrt() / 128.0,
            max_relative = 1e-7
        );
    }

    #[test]
    fn exponential_criterion_decays_exponentially() {
        // F = e^t: Λ(u) = √2(e^(−u/2) − (2/3)e^(−u)).
        let eval = LambdaEvaluator::new(&Nonlinearity::exponential());
        for &u in &[5.0f64, 30.0] {
            let expected = std::f64::consts::SQRT_2 * ((-u / 2.0).exp() - (2.0 / 3.0) * (-u).exp());
            assert_relative_eq!(eval.lambda_at(u).unwrap(), expected, max_relative = 1e-6);
        }
    }

    #[test]
    fn power_criterion_is_scale_free() {
        // Λ(2u)/Λ(u) = 2^((3−p)/2) for the power family.
        for &p in &[3.0, 3.5, 4.0, 5.0, 6.0] {
            let eval = LambdaEvaluator::new(&pow(p));
            let expected = 2f64.powf((3.0 - p) / 2.0);
            for &u in &[2.0, 5.0, 17.0, 40.0, 111.0] {
                let ratio = eval.lambda_at(2.0 * u).unwrap() / eval.lambda_at(u).unwrap();
                assert_relative_eq!(ratio, expected, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn classify_quintic_power_as_universal() {
        let report = classify(&pow(5.0), 1.0, 1000.0, 33).unwrap();
        assert_eq!(report.classification, Classification::Universal);
        let slope = report.slope.unwrap();
        assert!((slope + 1.0).abs() <= 0.05, "slope {slope}");
        assert!(report.failure.is_none());
    }

    #[test]
    fn classify_cubic_power_as_non_universal_plateau() {
        let report = classify(&pow(3.0), 1.0, 1000.0, 33).unwrap();
        assert_eq!(report.classification, Classification::NonUniversal);
        let slope = report.slope.unwrap();
        assert!(slope.abs() <= 0.05, "slope {slope}");
        let plateau = report.samples.last().unwrap().1;
        assert_relative_eq!(plateau, std::f64::consts::SQRT_2 / 6.0, max_relative = 1e-6);
    }

    #[test]
    fn classify_exponential_as_universal() {
        let report = classify(&Nonlinearity::exponential(), 0.25, 40.0, 33).unwrap();
        assert_eq!(report.classification, Classification::Universal);
    }

    #[test]
    fn classified_slopes_track_the_power_family() {
        for &p in &[3.5, 4.0, 5.0, 6.0] {
            let report = classify(&pow(p), 1.0, 1000.0, 33).unwrap();
            assert_eq!(report.classification, Classification::Universal, "p = {p}");
            let slope = report.slope.unwrap();
            let expected = (3.0 - p) / 2.0;
            assert!(
                (slope - expected).abs() <= 0.05,
                "p = {p}: slope {slope} vs {expected}"
            );
        }
    }

    #[test]
    fn widening_the_range_never_flips_the_verdict() {
        for nl in [pow(3.0), pow(5.0), Nonlinearity::exponential()] {
            let lo = if matches!(nl.kind(), Kind::Exponential) {
                0.25
            } else {
                1.0
            };
            let narrow = classify(&nl, lo, 200.0 * lo, 33).unwrap();
            let wide = classify(&nl, lo, 2000.0 * lo, 33).unwrap();
            if narrow.classification != Classification::Inconclusive
                && wide.classification != Classification::Inconclusive
            {
                assert_eq!(
                    narrow.classification,
                    wide.classification,
                    "verdict flipped for {}",
                    nl.spec_text()
                );
            }
        }
    }

    #[test]
    fn classify_range_and_sample_count_preconditions() {
        assert!(matches!(
            classify(&pow(3.0), 1.0, 50.0, 33),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            classify(&pow(3.0), 1.0, 1000.0, 8),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn divergent_tail_yields_inconclusive_with_failure_record() {
        // f(u) = u: the criterion tail diverges, never silently.
        let nl = Nonlinearity::parse("expr:u;a=1").unwrap();
        let report = classify(&nl, 2.0, 2000.0, 16).unwrap();
        assert_eq!(report.classification, Classification::Inconclusive);
        let (u, why) = report.failure.expect("failure recorded");
        assert_eq!(u, 2.0);
        assert!(
            why.contains("diverged") || why.contains("certified"),
            "{why}"
        );
        assert!(report.slope.is_none());
    }

    #[test]
    fn along_profile_decay_matches_the_inversion_rate() {
        // pow:5: u_0(d) ∝ d^(−1/2) and Λ ∝ 1/u, so Λ(u_0(d)) ∝ √d.
        let nl = pow(5.0);
        let v0 = VelocityProfile::make_v0(&nl, 2.0, 2.0e6, 128).unwrap();
        let bp = BlowupProfile::new(&v0);
        let rows = lambda_along_profile(&nl, &bp, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        assert_eq!(rows.len(), 4);
        let scaled: Vec<f64> = rows.iter().map(|r| r.2 / r.0.sqrt()).collect();
        for w in scaled.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.02, "Λ/√d drifted: {scaled:?}");
        }
    }

    #[test]
    fn along_profile_plateau_is_distance_independent() {
        let nl = pow(3.0);
        let v0 = VelocityProfile::make_v0(&nl, 8.0, 8.0e6, 128).unwrap();
        let bp = BlowupProfile::new(&v0);
        let rows = lambda_along_profile(&nl, &bp, &[1e-2]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_relative_eq!(
            rows[0].2,
            std::f64::consts::SQRT_2 / 6.0,
            max_relative = 1e-6
        );
    }

    #[test]
    fn along_profile_requires_the_starting_iterate() {
        let nl = pow(5.0);
        let v0 = VelocityProfile::make_v0(&nl, 2.0, 2.0e6, 128).unwrap();
        let v1 = v0.iterate(3).unwrap();
        let bp = BlowupProfile::new(&v1);
        assert!(matches!(
            lambda_along_profile(&nl, &bp, &[1e-2]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn expression_kind_uses_its_threshold_as_base_point() {
        let nl = Nonlinearity::parse("expr:u^3;a=1").unwrap();
        assert_eq!(antiderivative_base(&nl), 1.0);
        assert_eq!(antiderivative_base(&pow(3.0)), 0.0);
    }
}
