//! Exact truncated-series algebra and explicit expansion coefficients for
//! the pure power family in normalized scale.
//!
//! With F = ½u^(2q) (so f = q·u^(2q−1), i.e. a constant multiple of u^p with
//! p = 2q−1), the velocity iteration closes over series of the form
//! u^c·Σ b_k u^(−k(q−1)): every step is coefficient arithmetic, no
//! quadrature. Iterating and then formally inverting the distance relation
//! ∫_u^∞ dt/v = d produces the boundary expansion
//!
//! ```text
//! u(d) = d^(−1/(q−1)) · (a_0 + a_1 d + a_2 d² + …),
//! ```
//!
//! whose coefficients depend only on p and the dimension. Terms stay
//! singular (negative power of d) for k ≤ ⌊2/(p−1)⌋; later terms are o(1)
//! refinements. Exponents with 2/(p−1) an integer are rejected: there the
//! expansion would need logarithmic terms.
//!
//! Series here are truncated power series Σ c_k x^(e0 + k·step) in a formal
//! small variable x; taking x = 1/u, a term x^γ is u^(−γ). All operations
//! are closed over a fixed truncation order and drop higher terms.

use crate::error::{Error, Result};

/// How close a formal exponent must come to the logarithmic case before it
/// is treated as resonant.
const RESONANCE_TOL: f64 = 1e-9;

/// A truncated formal power series Σ_{k=0..n} c_k x^(e0 + k·step).
///
/// The exponents form an arithmetic grid; operations combine grids exactly
/// (addition of leading exponents, unit shifts from integration) so no
/// exponent drift accumulates. Coefficients are floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    e0: f64,
    step: f64,
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    /// A series with the given leading exponent, positive step, and
    /// coefficients c_0..c_n (truncation order n).
    pub fn new(e0: f64, step: f64, coeffs: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !e0.is_finite() {
            return Err(Error::Domain(format!(
                "series needs a finite leading exponent and positive step, \
                 got e0 = {e0}, step = {step}"
            )));
        }
        if coeffs.is_empty() {
            return Err(Error::Domain(
                "series needs at least one coefficient".into(),
            ));
        }
        Ok(TruncatedSeries { e0, step, coeffs })
    }

    pub fn leading_exponent(&self) -> f64 {
        self.e0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Truncation order n (the series carries n + 1 coefficients).
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Exponent of the k-th term.
    pub fn exponent(&self, k: usize) -> f64 {
        self.e0 + k as f64 * self.step
    }

    /// The same series with every exponent shifted (multiplication by
    /// x^delta).
    pub fn shifted(&self, delta: f64) -> Self {
        TruncatedSeries {
            e0: self.e0 + delta,
            step: self.step,
            coeffs: self.coeffs.clone(),
        }
    }

    /// The series scaled by a constant.
    pub fn scaled(&self, c: f64) -> Self {
        TruncatedSeries {
            e0: self.e0,
            step: self.step,
            coeffs: self.coeffs.iter().map(|x| c * x).collect(),
        }
    }

    fn require_same_step(&self, other: &Self) -> Result<()> {
        if (self.step - other.step).abs() > RESONANCE_TOL * self.step.max(other.step) {
            return Err(Error::Domain(format!(
                "series steps differ: {} vs {}",
                self.step, other.step
            )));
        }
        Ok(())
    }

    /// Product, truncated at the smaller of the two orders.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.require_same_step(other)?;
        let n = self.order().min(other.order());
        let mut coeffs = vec![0.0; n + 1];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.coeff(j) * other.coeff(k - j);
            }
            *c = acc;
        }
        TruncatedSeries::new(self.e0 + other.e0, self.step, coeffs)
    }

    /// The series raised to a real power via the multiplicative recurrence
    /// on the normalized bracket; requires a nonzero leading coefficient
    /// (positive unless the power is an integer).
    fn pow(&self, alpha: f64) -> Result<Self> {
        let c0 = self.coeffs[0];
        if c0 == 0.0 || !c0.is_finite() {
            return Err(Error::Domain(format!(
                "series power needs a nonzero finite leading coefficient, got {c0}"
            )));
        }
        if c0 < 0.0 && alpha.fract() != 0.0 {
            return Err(Error::Domain(format!(
                "series power {alpha} needs a positive leading coefficient, got {c0}"
            )));
        }
        let n = self.order();
        let h: Vec<f64> = self.coeffs.iter().map(|c| c / c0).collect();
        let mut b = vec![0.0; n + 1];
        b[0] = 1.0;
        for k in 1..=n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += ((alpha + 1.0) * j as f64 - k as f64) * h[j] * b[k - j];
            }
            b[k] = acc / k as f64;
        }
        let front = c0.powf(alpha);
        let coeffs = b.iter().map(|x| front * x).collect();
        TruncatedSeries::new(alpha * self.e0, self.step, coeffs)
    }

    /// Reciprocal; requires a nonzero leading coefficient.
    pub fn recip(&self) -> Result<Self> {
        self.pow(-1.0)
    }

    /// Square root; requires a positive leading coefficient.
    pub fn sqrt(&self) -> Result<Self> {
        self.pow(0.5)
    }

    /// ∫_u^∞ of the series read as a function of u = 1/x: the term
    /// x^γ = u^(−γ) maps to u^(1−γ)/(γ−1), i.e. x^(γ−1)/(γ−1). Every
    /// exponent must satisfy γ > 1 for the tail to converge; γ = 1 is the
    /// logarithmic resonance.
    pub fn tail_integrate(&self) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (k, &c) in self.coeffs.iter().enumerate() {
            let gamma = self.exponent(k);
            if (gamma - 1.0).abs() <= RESONANCE_TOL {
                return Err(Error::Resonance {
                    order: k,
                    exponent: -gamma,
                });
            }
            if gamma < 1.0 {
                return Err(Error::Domain(format!(
                    "tail integral diverges: term {k} has exponent {} in the \
                     integration variable",
                    -gamma
                )));
            }
            coeffs.push(c / (gamma - 1.0));
        }
        TruncatedSeries::new(self.e0 - 1.0, self.step, coeffs)
    }

    /// Formal antiderivative ∫^u of the series read as a function of
    /// u = 1/x: the term x^γ = u^(−γ) maps to u^(1−γ)/(1−γ), i.e.
    /// −x^(γ−1)/(γ−1). For γ < 1 this equals the definite integral from 0;
    /// for γ > 1 the base contribution is a constant absorbed by the
    /// expansion's o(·) bookkeeping. γ = 1 is the logarithmic resonance.
    pub fn base_integrate(&self) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (k, &c) in self.coeffs.iter().enumerate() {
            let gamma = self.exponent(k);
            if (gamma - 1.0).abs() <= RESONANCE_TOL {
                return Err(Error::Resonance {
                    order: k,
                    exponent: -gamma,
                });
            }
            coeffs.push(-c / (gamma - 1.0));
        }
        TruncatedSeries::new(self.e0 - 1.0, self.step, coeffs)
    }
}

/// Expansion coefficients for the normalized power family.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesExpansion {
    /// Power-law exponent p > 1 of the nonlinearity.
    pub p: f64,
    /// q = (p + 1)/2, the exponent of the free-fall speed u^q.
    pub q: f64,
    /// Space dimension.
    pub n_dim: usize,
    /// Boundary-expansion coefficients a_0..a_n.
    pub a: Vec<f64>,
    /// Velocity-bracket coefficients b_0..b_n (b_0 = 1).
    pub b: Vec<f64>,
    /// Truncation order.
    pub n: usize,
    /// Number of singular terms: ⌊2/(p−1)⌋ + 1. Terms beyond this count
    /// are o(1) refinements.
    pub singular_count: usize,
}

/// Runs the velocity iteration in closed series form and inverts the
/// distance relation, producing the expansion coefficients a_0..a_n and
/// b_0..b_n for f proportional to u^p in the given dimension.
///
/// Rejects exponents with 2/(p−1) an integer (within 1e-9): the expansion
/// is then logarithmic. Orders beyond the singular count are permitted —
/// the extra terms are o(1) — and noted in the log.
pub fn power_coefficients(p: f64, n_dim: usize, n: usize) -> Result<SeriesExpansion> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!(
            "power exponent must satisfy p > 1, got {p}"
        )));
    }
    if n_dim < 1 {
        return Err(Error::Domain(format!(
            "dimension must be >= 1, got {n_dim}"
        )));
    }
    let ratio = 2.0 / (p - 1.0);
    if (ratio - ratio.round()).abs() <= RESONANCE_TOL && ratio.round() >= 1.0 {
        return Err(Error::Resonance {
            order: ratio.round() as usize,
            exponent: ratio,
        });
    }
    let q = (p + 1.0) / 2.0;
    let s = q - 1.0;
    let singular_count = ratio.floor() as usize + 1;
    if n > singular_count {
        log::warn!(
            "requested order {n} exceeds the singular count {singular_count}; \
             the extra terms are o(1) refinements"
        );
    }
    let coeff = (n_dim - 1) as f64;

    // Velocity bracket B with v = u^q · B(u), B a series in x^s (x = 1/u).
    // Order k of the output depends only on orders < k of the input, so n
    // sweeps stabilize every retained order.
    let mut bracket = TruncatedSeries::new(0.0, s, {
        let mut c = vec![0.0; n + 1];
        c[0] = 1.0;
        c
    })?;
    for _ in 0..n {
        // Tail of 1/v: series with leading exponent q − 1 = s.
        let tail = bracket.recip()?.shifted(q).tail_integrate()?;
        // r = 1 − tail, regridded to exponents 0, s, 2s, …
        let mut r_coeffs = vec![0.0; n + 1];
        r_coeffs[0] = 1.0;
        for (k, slot) in r_coeffs.iter_mut().enumerate().skip(1) {
            *slot = -tail.coeff(k - 1);
        }
        let r = TruncatedSeries::new(0.0, s, r_coeffs)?;
        // ∫^u v/r dt, then scale by 2(N−1)·u^(−2q) to sit under the root.
        let correction = bracket
            .mul(&r.recip()?)?
            .shifted(-q)
            .base_integrate()?
            .scaled(2.0 * coeff)
            .shifted(2.0 * q);
        let mut rad_coeffs = vec![0.0; n + 1];
        rad_coeffs[0] = 1.0;
        for (k, slot) in rad_coeffs.iter_mut().enumerate().skip(1) {
            *slot = -correction.coeff(k - 1);
        }
        bracket = TruncatedSeries::new(0.0, s, rad_coeffs)?.sqrt()?;
    }

    // Distance relation d(u) = ∫_u^∞ dt/v as a series Σ D_k z^(k+1) in
    // z = u^(−s).
    let dist = bracket.recip()?.shifted(q).tail_integrate()?;
    let d_coeffs: Vec<f64> = (0..=n).map(|k| dist.coeff(k)).collect();

    // Revert z(d) = Σ_{j>=1} β_j d^j by fixed point: each sweep stabilizes
    // one more order.
    let top = n + 1;
    let mut z = vec![0.0; top + 1];
    z[1] = 1.0 / d_coeffs[0];
    for _ in 0..top {
        // z ← (d − Σ_{k>=1} D_k z^{k+1}) / D_0
        let mut acc = vec![0.0; top + 1];
        acc[1] = 1.0;
        let mut z_pow = poly_mul_trunc(&z, &z, top);
        for (k, &dk) in d_coeffs.iter().enumerate().skip(1) {
            for (j, &c) in z_pow.iter().enumerate() {
                acc[j] -= dk * c;
            }
            if k < n {
                z_pow = poly_mul_trunc(&z_pow, &z, top);
            }
        }
        for c in acc.iter_mut() {
            *c /= d_coeffs[0];
        }
        z = acc;
    }

    // u = z^(−1/s): factor the leading term and expand the bracket.
    let beta1 = z[1];
    let mut bracket_d = vec![0.0; n + 1];
    bracket_d[0] = 1.0;
    for (k, c) in bracket_d.iter_mut().enumerate().skip(1) {
        *c = z[k + 1] / beta1;
    }
    let a = TruncatedSeries::new(0.0, 1.0, bracket_d)?
        .pow(-1.0 / s)?
        .scaled(beta1.powf(-1.0 / s));

    Ok(SeriesExpansion {
        p,
        q,
        n_dim,
        a: a.coeffs().to_vec(),
        b: bracket.coeffs().to_vec(),
        n,
        singular_count,
    })
}

fn poly_mul_trunc(a: &[f64], b: &[f64], top: usize) -> Vec<f64> {
    let mut out = vec![0.0; top + 1];
    for (i, &x) in a.iter().enumerate().take(top + 1) {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(top + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Evaluates the boundary expansion d^(−1/(q−1)) · Σ_{k<=n} a_k d^k.
pub fn series_profile(se: &SeriesExpansion, d: f64) -> f64 {
    let mut sum = 0.0;
    for &ak in se.a.iter().rev() {
        sum = sum * d + ak;
    }
    d.powf(-1.0 / (se.q - 1.0)) * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::VelocityProfile;
    use crate::nonlinearity::Nonlinearity;
    use approx::assert_relative_eq;

    fn unit_plus_x() -> TruncatedSeries {
        TruncatedSeries::new(0.0, 1.0, vec![1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn reciprocal_of_one_plus_x_is_the_alternating_series() {
        let r = unit_plus_x().recip().unwrap();
        assert_eq!(r.coeffs(), &[1.0, -1.0, 1.0]);
        assert_eq!(r.leading_exponent(), 0.0);
    }

    #[test]
    fn square_root_of_one_plus_x_is_the_binomial_series() {
        let r = unit_plus_x().sqrt().unwrap();
        assert_eq!(r.coeffs(), &[1.0, 0.5, -0.125]);
    }

    #[test]
    fn tail_integration_shifts_one_power_down() {
        // x² read as t^(−2): ∫_u^∞ t^(−2) dt = u^(−1), i.e. x¹.
        let s = TruncatedSeries::new(2.0, 1.0, vec![1.0]).unwrap();
        let t = s.tail_integrate().unwrap();
        assert_eq!(t.leading_exponent(), 1.0);
        assert_eq!(t.coeffs(), &[1.0]);
    }

    #[test]
    fn tail_integration_flags_the_logarithmic_exponent() {
        let s = TruncatedSeries::new(1.0, 1.0, vec![1.0]).unwrap();
        match s.tail_integrate() {
            Err(Error::Resonance { order, .. }) => assert_eq!(order, 0),
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn tail_integration_rejects_divergent_terms() {
        let s = TruncatedSeries::new(0.5, 1.0, vec![1.0]).unwrap();
        assert!(matches!(s.tail_integrate(), Err(Error::Domain(_))));
    }

    #[test]
    fn base_integration_matches_the_antiderivative() {
        // x^(−1/2) read as t^(1/2): ∫_0^u √t dt = (2/3) u^(3/2) = (2/3)x^(−3/2).
        let s = TruncatedSeries::new(-0.5, 1.0, vec![1.0]).unwrap();
        let t = s.base_integrate().unwrap();
        assert_eq!(t.leading_exponent(), -1.5);
        assert_relative_eq!(t.coeff(0), 2.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn product_truncates_at_the_shared_order() {
        let a = TruncatedSeries::new(0.0, 1.0, vec![1.0, 1.0, 0.0]).unwrap();
        let b = TruncatedSeries::new(0.0, 1.0, vec![1.0, -1.0, 0.0]).unwrap();
        assert_eq!(a.mul(&b).unwrap().coeffs(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn quartic_power_coefficients_match_the_hand_expansion() {
        // p = 4, N = 3 (q = 2.5): a_0 = 1.5^(−2/3), a_1/a_0 = (N−1)/(2(q+1)),
        // b_1 = −(N−1)/(q+1).
        let se = power_coefficients(4.0, 3, 1).unwrap();
        assert_relative_eq!(se.a[0], 1.5f64.powf(-2.0 / 3.0), max_relative = 1e-12);
        assert_relative_eq!(se.a[1] / se.a[0], 2.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(se.b[1], -4.0 / 7.0, max_relative = 1e-12);
        assert_eq!(se.b[0], 1.0);
    }

    #[test]
    fn one_dimensional_coefficients_collapse_to_the_leading_term() {
        let se = power_coefficients(4.0, 1, 4).unwrap();
        for k in 1..=4 {
            assert_eq!(se.a[k], 0.0, "a_{k}");
            assert_eq!(se.b[k], 0.0, "b_{k}");
        }
        let d = 3.7e-3;
        assert_eq!(series_profile(&se, d), se.a[0] * d.powf(-2.0 / 3.0));
    }

    #[test]
    fn logarithmic_exponents_are_rejected_upfront() {
        for p in [3.0, 2.0, 1.5] {
            assert!(
                matches!(power_coefficients(p, 3, 1), Err(Error::Resonance { .. })),
                "p = {p}"
            );
        }
    }

    #[test]
    fn mid_recursion_resonance_carries_the_offending_order() {
        // p = 5 passes the 2/(p−1) check but the correction integral hits
        // the logarithmic exponent at order 2.
        assert!(power_coefficients(5.0, 3, 1).is_ok());
        match power_coefficients(5.0, 3, 2) {
            Err(Error::Resonance { order, .. }) => assert_eq!(order, 2),
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn singular_counts_match_the_summation_index() {
        assert_eq!(power_coefficients(4.0, 3, 1).unwrap().singular_count, 1);
        assert_eq!(power_coefficients(2.5, 3, 1).unwrap().singular_count, 2);
    }

    #[test]
    fn profile_evaluation_matches_the_two_term_numbers() {
        let se = power_coefficients(4.0, 3, 1).unwrap();
        let one_term = power_coefficients(4.0, 3, 0).unwrap();
        assert_relative_eq!(
            series_profile(&one_term, 1e-3),
            76.3143,
            max_relative = 1e-5
        );
        assert_relative_eq!(series_profile(&se, 1e-3), 76.3361, max_relative = 1e-5);
        assert_eq!(series_profile(&one_term, 1.0), one_term.a[0]);
    }

    #[test]
    fn coefficients_are_deterministic_across_reruns() {
        let a = power_coefficients(4.0, 3, 3).unwrap();
        let b = power_coefficients(4.0, 3, 3).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.b, b.b);
    }

    #[test]
    fn orders_beyond_the_singular_count_still_evaluate() {
        let se = power_coefficients(4.0, 3, 3).unwrap();
        assert_eq!(se.a.len(), 4);
        assert!(se.a.iter().all(|c| c.is_finite()));
        assert!(se.n > se.singular_count);
    }

    #[test]
    fn series_tracks_the_iterated_velocity_profile() {
        // The formal one-step expansion and the numeric one-step profile
        // describe the same object; their relative gap shrinks by at least
        // an order of magnitude per decade of d.
        for &p in &[4.0, 6.0] {
            for &n_dim in &[2usize, 3] {
                let se = power_coefficients(p, n_dim, 1).unwrap();
                let nl = Nonlinearity::power_normalized(p).unwrap();
                let v0 = VelocityProfile::make_v0(&nl, 2.0, 2.0e5, 1024).unwrap();
                let v1 = v0.iterate(n_dim).unwrap();
                let mut gaps = Vec::new();
                for &d in &[1e-2, 1e-3, 1e-4] {
                    let numeric = v1.invert(d).unwrap();
                    let formal = series_profile(&se, d);
                    gaps.push((numeric - formal).abs() / formal);
                }
                // Fitted decay order across the two decades; the smallest
                // distance sits near the numeric profile's own resolution,
                // so the per-decade ratio there can flatten.
                let order = (gaps[0] / gaps[2]).log10() / 2.0;
                assert!(
                    gaps[0] > gaps[1] && gaps[1] > gaps[2],
                    "p = {p}, N = {n_dim}: gaps not decreasing {gaps:?}"
                );
                assert!(
                    order >= 1.0,
                    "p = {p}, N = {n_dim}: observed order {order} below 1, \
                     gaps {gaps:?}"
                );
            }
        }
    }

    #[test]
    fn higher_truncation_orders_refine_toward_the_converged_profile() {
        // Against the fully converged iteration, each extra series term
        // buys a visibly smaller gap at fixed small d.
        let nl = Nonlinearity::power_normalized(4.0).unwrap();
        let v0 = VelocityProfile::make_v0(&nl, 2.0, 2.0e6, 256).unwrap();
        let v1 = v0.iterate(3).unwrap();
        let v2 = v1.iterate(3).unwrap();
        let v3 = v2.iterate(3).unwrap();
        let d = 1e-3;
        let reference = v3.invert(d).unwrap();
        let gap0 = {
            let se = power_coefficients(4.0, 3, 0).unwrap();
            (series_profile(&se, d) - reference).abs()
        };
        let gap1 = {
            let se = power_coefficients(4.0, 3, 1).unwrap();
            (series_profile(&se, d) - reference).abs()
        };
        assert!(
            gap1 < 0.1 * gap0,
            "order-1 gap {gap1} not well below order-0 gap {gap0}"
        );
    }
}
