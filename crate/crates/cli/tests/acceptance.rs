//! Acceptance gate: one test per advertised capability, each at its stated
//! tolerance. `cargo test --test acceptance` prints one pass/fail line per
//! criterion.

use blowup::criterion::{classify, Classification};
use blowup::expansion::{
    choose_u0, compare_profiles, default_umax, iterate_to_convergence, one_dim_profile,
    BlowupProfile, VelocityProfile,
};
use blowup::nonlinearity::Nonlinearity;
use blowup::powerlaw::power_coefficients;
use blowup::shoot::{calibrate_alpha, compare_to_expansion, diagnostics, shoot};
use blowup::Error;
use std::process::Command;

fn nl(spec: &str) -> Nonlinearity {
    Nonlinearity::parse(spec).expect("valid spec")
}

/// Runs the CLI binary, returning (exit code, stdout).
fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_blowup"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).expect("UTF-8"),
    )
}

/// Extracts column `idx` of the first data row of a CSV report.
fn first_row_field(csv: &str, idx: usize) -> String {
    csv.lines()
        .nth(1)
        .expect("data row")
        .split(',')
        .nth(idx)
        .expect("field")
        .to_string()
}

/// Builds the default k-th velocity iterate for a nonlinearity.
fn iterate_k(spec: &str, n_dim: usize, k: usize) -> VelocityProfile {
    let nl = nl(spec);
    let u0 = choose_u0(&nl, n_dim).expect("start height");
    let umax = default_umax(&nl, u0).expect("grid top");
    let mut v = VelocityProfile::make_v0(&nl, u0, umax, 256).expect("v0");
    for _ in 0..k {
        v = v.iterate(n_dim).expect("iterate");
    }
    v
}

#[test]
fn criterion_01_growth_test_oracles() {
    let (code, csv) = cli(&["ko", "--nl", "pow:3", "--lo", "1"]);
    assert_eq!(code, 0);
    let value: f64 = first_row_field(&csv, 1).parse().expect("number");
    assert!((value - 2.0).abs() < 1e-6, "pow:3 tail integral {value}");

    let (code, csv) = cli(&["ko", "--nl", "exp", "--lo", "0"]);
    assert_eq!(code, 0);
    let value: f64 = first_row_field(&csv, 1).parse().expect("number");
    assert!((value - 2.0).abs() < 1e-6, "exp tail integral {value}");

    let (code, csv) = cli(&["ko", "--nl", "expr:u;a=1", "--lo", "2"]);
    assert_eq!(code, 2);
    assert_eq!(first_row_field(&csv, 0), "diverges");
}

#[test]
fn criterion_02_zeroth_profile_closed_forms() {
    type ClosedForm = fn(f64) -> f64;
    let cases: [(&str, ClosedForm); 3] = [
        ("pow:3", |d| std::f64::consts::SQRT_2 / d),
        ("pow:5", |d| (3.0_f64.sqrt() / (2.0 * d)).sqrt()),
        ("exp", |d| 2.0 * (std::f64::consts::SQRT_2 / d).ln()),
    ];
    for (spec, exact) in cases {
        let v0 = iterate_k(spec, 2, 0);
        let profile = BlowupProfile::new(&v0);
        for d in [1e-1, 1e-2, 1e-3, 1e-4] {
            let u = profile.u_at(d).expect("inversion");
            let rel = (u - exact(d)).abs() / exact(d);
            assert!(rel < 1e-8, "{spec} at d={d:.0e}: u={u}, rel={rel:.3e}");
        }
    }
}

#[test]
fn criterion_03_criterion_constants_and_classifications() {
    let plateau = std::f64::consts::SQRT_2 / 6.0;
    let report = classify(&nl("pow:3"), 100.0, 10_000.0, 33).expect("classify");
    assert_eq!(report.classification, Classification::NonUniversal);
    for &(u, lambda) in &report.samples {
        let rel = (lambda - plateau).abs() / plateau;
        assert!(rel < 0.01, "pow:3 lambda({u}) = {lambda}, rel {rel:.3e}");
    }

    let report = classify(&nl("pow:5"), 100.0, 10_000.0, 33).expect("classify");
    assert_eq!(report.classification, Classification::Universal);
    let slope = report.slope.expect("slope");
    assert!((slope + 1.0).abs() <= 0.05, "pow:5 slope {slope}");
    let (u_first, lambda_first) = report.samples[0];
    assert!((u_first - 100.0).abs() < 1e-9);
    let oracle = 3.0_f64.sqrt() / 1600.0;
    let rel = (lambda_first - oracle).abs() / oracle;
    assert!(
        rel < 0.01,
        "pow:5 lambda(100) = {lambda_first}, rel {rel:.3e}"
    );
}

#[test]
fn criterion_04_fixed_point_contraction() {
    let quintic = nl("pow:5");
    let u0 = choose_u0(&quintic, 3).expect("start height");
    let conv = iterate_to_convergence(&quintic, 3, u0, 1e-12, 6).expect("iteration");
    assert!(conv.deltas.len() >= 5, "need at least 5 deltas");
    for pair in conv.deltas.windows(2).take(4) {
        let ratio = pair[1] / pair[0];
        assert!(
            ratio <= 0.9,
            "delta ratio {ratio} exceeds 0.9: {:?}",
            conv.deltas
        );
    }
    for profile in &conv.profiles {
        let sup = profile
            .ratio()
            .iter()
            .map(|w| (w - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(
            sup < 0.25,
            "iterate k={} leaves the ball: sup {sup}",
            profile.k()
        );
    }

    let u0 = choose_u0(&quintic, 1).expect("start height");
    let conv = iterate_to_convergence(&quintic, 1, u0, 1e-12, 6).expect("iteration");
    assert!(conv.converged);
    assert_eq!(conv.deltas.len(), 1, "one dimension must converge at k = 1");
    assert!(conv.deltas[0] <= 1e-12, "delta {}", conv.deltas[0]);
}

#[test]
fn criterion_05_three_term_remainders_and_inversion() {
    let quintic = nl("pow:5");
    let t = blowup::threeterm::remainder_terms(&quintic, 3, 10.0, 0.0).expect("terms");
    assert!((t.r0 - 8.66025e-3).abs() < 1e-8, "r0 = {}", t.r0);
    assert!((t.r1 - 3.75e-5).abs() < 1e-9, "r1 = {}", t.r1);
    assert!(t.r2.abs() / t.r1 < 0.1, "r2/r1 = {}", t.r2.abs() / t.r1);

    let v2 = iterate_k("pow:5", 3, 2);
    let profile = BlowupProfile::new(&v2);
    let u_fixed_point = profile.u_at(1e-3).expect("inversion");
    let u_three_term =
        blowup::threeterm::invert_three_term(&quintic, 3, 1e-3, 0.0).expect("inversion");
    let rel = (u_three_term - u_fixed_point).abs() / u_fixed_point;
    assert!(
        rel < 1e-3,
        "three-term {u_three_term} vs k=2 {u_fixed_point}: {rel:.3e}"
    );
}

#[test]
fn criterion_06_power_law_coefficients() {
    let se = power_coefficients(4.0, 3, 1).expect("series");
    assert!((se.a[0] - 0.763143).abs() < 1e-6, "a0 = {}", se.a[0]);
    assert!((se.a[1] - 0.218041).abs() < 1e-6, "a1 = {}", se.a[1]);
    assert!((se.b[1] - (-0.571429)).abs() < 1e-6, "b1 = {}", se.b[1]);

    let se = power_coefficients(4.0, 1, 5).expect("series");
    for k in 1..=5 {
        assert_eq!(se.a[k], 0.0, "one-dimensional a_{k} must vanish exactly");
    }

    match power_coefficients(3.0, 3, 2) {
        Err(Error::Resonance { .. }) => {}
        other => panic!("p = 3 must be rejected as resonant, got {other:?}"),
    }
}

#[test]
fn criterion_07_shooting_radius_oracle_and_scaling() {
    let cubic = nl("pow:3");
    let res = shoot(&cubic, 1, 1.0, 1e6, 1e-9).expect("shot");
    assert!(res.blew_up);
    assert!((res.r_est - 1.85407).abs() < 1e-4, "radius {}", res.r_est);

    let mut products = Vec::new();
    for alpha in [1.0, 4.0, 16.0] {
        let res = shoot(&cubic, 3, alpha, 1e6, 1e-9).expect("shot");
        assert!(res.blew_up);
        products.push(res.r_est * alpha); // α^{(p−1)/2} = α for p = 3
    }
    let mean = products.iter().sum::<f64>() / products.len() as f64;
    for p in &products {
        assert!(
            (p - mean).abs() / mean < 5e-3,
            "scaling products {products:?} vary beyond 0.5%"
        );
    }

    let coarse = shoot(&cubic, 3, 2.0, 1e6, 1e-9).expect("shot");
    let fine = shoot(&cubic, 3, 2.0, 1e8, 1e-9).expect("shot");
    let rel = ((fine.r_est - coarse.r_est) / coarse.r_est).abs();
    assert!(
        rel < 1e-6,
        "radius moved {rel:.3e} when the ceiling rose 100x"
    );
}

#[test]
fn criterion_08_energy_diagnostics_on_calibrated_shot() {
    let cubic = nl("pow:3");
    let alpha = calibrate_alpha(&cubic, 3, 1.0, 1e-4).expect("calibration");
    let res = shoot(&cubic, 3, alpha, 1e6, 1e-10).expect("shot");
    let rows = diagnostics(&res, &cubic).expect("diagnostics");
    let &(u, g, ratio) = rows.last().expect("rows");
    assert!(u >= 1e3, "largest sampled height {u} below 1e3");
    let ratio = ratio.expect("ratio defined for N >= 2");
    assert!((0.9..=1.1).contains(&ratio), "g/((N-1)G) = {ratio}");
    let big_f = cubic.big_f(u).expect("F");
    assert!(g / big_f < 0.05, "g/F = {}", g / big_f);
}

#[test]
fn criterion_09_universality_dichotomy() {
    let d_grid = [1e-2, 1e-3, 1e-4];

    // Universal side: the shot converges to the zeroth profile.
    let quintic = nl("pow:5");
    let v0 = iterate_k("pow:5", 3, 0);
    let p0 = BlowupProfile::new(&v0);
    let alpha = calibrate_alpha(&quintic, 3, 1.0, 1e-4).expect("calibration");
    let res = shoot(&quintic, 3, alpha, 1e6, 1e-9).expect("shot");
    let rows = compare_to_expansion(&res, std::slice::from_ref(&p0), &d_grid).expect("compare");
    for row in &rows {
        assert!(!row.flagged, "d={} outside trajectory resolution", row.d);
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.gaps[0].abs()).collect();
    assert!(gaps[1] < 0.05, "quintic gap at d=1e-3 is {}", gaps[1]);
    assert!(
        gaps[0] > gaps[1] && gaps[1] > gaps[2],
        "quintic gaps must decrease: {gaps:?}"
    );
    for row in &rows {
        let ratio = row.gaps[0] / row.predicted_gap;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "gap at d={} is {}x the first-order prediction",
            row.d,
            ratio
        );
    }

    // Non-universal side: the gap plateaus instead of vanishing.
    let cubic = nl("pow:3");
    let v0 = iterate_k("pow:3", 3, 0);
    let p0 = BlowupProfile::new(&v0);
    let alpha = calibrate_alpha(&cubic, 3, 1.0, 1e-4).expect("calibration");
    let res = shoot(&cubic, 3, alpha, 1e6, 1e-9).expect("shot");
    let rows = compare_to_expansion(&res, std::slice::from_ref(&p0), &d_grid).expect("compare");
    for row in &rows {
        assert!(!row.flagged, "d={} outside trajectory resolution", row.d);
        assert!(
            (0.2..=1.0).contains(&row.gaps[0].abs()),
            "cubic gap at d={} is {} (expected a plateau near 0.47)",
            row.d,
            row.gaps[0]
        );
    }
}

#[test]
fn criterion_10_one_dimensional_profile_comparison() {
    let cubic = nl("pow:3");
    let mut prev_gap = f64::INFINITY;
    for d in [1e-2, 1e-3, 1e-4] {
        let phi0 = one_dim_profile(&cubic, 0.0, d).expect("profile");
        let phi1 = one_dim_profile(&cubic, 1.0, d).expect("profile");
        let gap = phi0 - phi1;
        assert!(gap > 0.0, "gap at d={d:.0e} is {gap} (must be positive)");
        assert!(
            gap < prev_gap,
            "gap at d={d:.0e} is {gap}, not below {prev_gap}"
        );
        prev_gap = gap;
    }
    assert!(prev_gap < 1e-3, "gap at d=1e-4 is {prev_gap}");
}

#[test]
fn criterion_11_asymptotic_sequence_property() {
    let v0 = iterate_k("pow:5", 3, 0);
    let v1 = v0.iterate(3).expect("iterate");
    let v2 = v1.iterate(3).expect("iterate");
    let d_grid = [1e-2, 1e-3, 1e-4];
    for (lower, upper) in [(&v0, &v1), (&v1, &v2)] {
        let pa = BlowupProfile::new(lower);
        let pb = BlowupProfile::new(upper);
        let rows = compare_profiles(&pa, &pb, &d_grid).expect("compare");
        let mut prev = f64::INFINITY;
        for row in &rows {
            let tail = v0.tail_at(row.u_a).expect("tail");
            let ratio = row.normalized_gap / tail;
            assert!(
                ratio < prev,
                "k={}: normalized gap/tail {ratio} at d={} did not decrease",
                lower.k(),
                row.d
            );
            prev = ratio;
        }
    }
}
