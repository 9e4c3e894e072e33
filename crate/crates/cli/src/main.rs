//! Command-line front end: wires the expansion, criterion, series, and
//! shooting machinery into reproducible experiments with CSV or JSON
//! reports.
//!
//! Exit codes: 0 success; 2 growth test divergent where convergence was
//! required; 3 numerical non-convergence; 4 argument or spec parse error.
//! Diagnostics go to stderr, reports to stdout or `--out`.

mod report;

use blowup::criterion::{classify, lambda_along_profile};
use blowup::expansion::{
    choose_u0, default_umax, iterate_to_convergence_with, BlowupProfile, VelocityProfile,
};
use blowup::nonlinearity::{KellerOsserman, Nonlinearity};
use blowup::powerlaw::power_coefficients;
use blowup::shoot::{calibrate_alpha, compare_to_expansion, diagnostics, shoot};
use blowup::threeterm::{invert_three_term, remainder_terms};
use blowup::Error;
use clap::{Arg, ArgAction, ArgMatches, Command};

use report::{fmt_bool, fmt_g, RunReport};

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let level = std::env::var("BLOWUP_LOG").unwrap_or_else(|_| "off".to_string());
    let _ = env_logger::Builder::new().parse_filters(&level).try_init();

    let matches = match build_cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let outcome = match name {
        "ko" => cmd_ko(sub),
        "expand" => cmd_expand(sub),
        "profile" => cmd_profile(sub),
        "criterion" => cmd_criterion(sub),
        "three-term" => cmd_three_term(sub),
        "power-coeffs" => cmd_power_coeffs(sub),
        "shoot" => cmd_shoot(sub),
        "compare" => cmd_compare(sub),
        other => unreachable!("unknown subcommand {other}"),
    };
    match outcome {
        Ok((report, code)) => {
            if let Err(e) = emit(&report, sub) {
                eprintln!("error: cannot write output: {e}");
                return 3;
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Threshold(_) | Error::Domain(_) => 4,
        Error::KellerOssermanDivergent { .. } => 2,
        _ => 3,
    }
}

fn emit(report: &RunReport, m: &ArgMatches) -> std::io::Result<()> {
    let body = match m.get_one::<String>("format").map(String::as_str) {
        Some("json") => report.to_json(),
        _ => report.to_csv(),
    };
    match m.get_one::<String>("out") {
        Some(path) => std::fs::write(path, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn build_cli() -> Command {
    Command::new("blowup")
        .version(env!("CARGO_PKG_VERSION"))
        .about(
            "Boundary asymptotics of radial blow-up solutions of \u{394}u = f(u) \
             on the unit ball",
        )
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_output(
            Command::new("ko")
                .about("Growth test: does \u{222b} dt/\u{221a}F(t) converge?")
                .arg(nl_arg())
                .arg(f64_arg("lo", "Lower end of the tail integral").required(true))
                .arg(f64_arg("tol", "Quadrature tolerance").default_value("1e-9")),
        ))
        .subcommand(with_output(
            Command::new("expand")
                .about("Velocity iteration: contraction deltas until convergence")
                .arg(nl_arg())
                .arg(dim_arg())
                .arg(f64_arg(
                    "u0",
                    "Start height (chosen automatically if absent)",
                ))
                .arg(f64_arg(
                    "umax",
                    "Grid top (defaults to the overflow-safe top)",
                ))
                .arg(usize_arg("grid", "Grid nodes").default_value("256"))
                .arg(
                    f64_arg("tol", "Convergence tolerance on sup-ratio deltas")
                        .default_value("1e-9"),
                )
                .arg(usize_arg("kmax", "Iteration cap").default_value("8")),
        ))
        .subcommand(with_output(
            Command::new("profile")
                .about("Blow-up profile u_k(d) at boundary distances")
                .arg(nl_arg())
                .arg(dim_arg())
                .arg(d_grid_arg().required(true))
                .arg(usize_arg("kmax", "Iteration count k of the profile").default_value("0"))
                .arg(f64_arg(
                    "u0",
                    "Start height (chosen automatically if absent)",
                ))
                .arg(f64_arg(
                    "umax",
                    "Grid top (defaults to the overflow-safe top)",
                ))
                .arg(usize_arg("grid", "Grid nodes").default_value("256")),
        ))
        .subcommand(with_output(
            Command::new("criterion")
                .about(
                    "Universality functional \u{39b}(u): sample, fit, classify; \
                     or evaluate along a starting profile",
                )
                .arg(nl_arg())
                .arg(f64_arg("lo", "Lowest sample height"))
                .arg(f64_arg("hi", "Highest sample height (>= 100*lo)"))
                .arg(usize_arg(
                    "grid",
                    "Sample count (or profile nodes with \
                     --along-profile)",
                ))
                .arg(
                    Arg::new("along-profile")
                        .long("along-profile")
                        .help(
                            "Evaluate \u{39b} along the starting blow-up profile \
                               at --d-grid instead of classifying over a height range",
                        )
                        .action(ArgAction::SetTrue),
                )
                .arg(d_grid_arg())
                .arg(f64_arg(
                    "u0",
                    "Start height (chosen automatically if absent)",
                ))
                .arg(f64_arg(
                    "umax",
                    "Grid top (defaults to the overflow-safe top)",
                )),
        ))
        .subcommand(with_output(
            Command::new("three-term")
                .about(
                    "Closed-form three-term distance remainders, or the profile \
                     they invert to",
                )
                .arg(nl_arg())
                .arg(dim_arg())
                .arg(f64_arg("u0", "Height at which to evaluate the remainders"))
                .arg(f64_arg(
                    "base",
                    "Lower reference point (defaults to the \
                     positivity threshold)",
                ))
                .arg(d_grid_arg()),
        ))
        .subcommand(with_output(
            Command::new("power-coeffs")
                .about("Power-law expansion coefficients a_k, b_k for f = u^p")
                .arg(f64_arg("p", "Power exponent p > 1").required(true))
                .arg(dim_arg())
                .arg(usize_arg("order", "Truncation order").default_value("1")),
        ))
        .subcommand(with_output(
            Command::new("shoot")
                .about("Radial shot from the center with energy diagnostics")
                .arg(nl_arg())
                .arg(dim_arg())
                .arg(f64_arg("alpha", "Center value u(0)").required(true))
                .arg(f64_arg("umax", "Blow-up ceiling").default_value("1e6"))
                .arg(f64_arg("tol", "Integrator tolerance").default_value("1e-9")),
        ))
        .subcommand(with_output(
            Command::new("compare")
                .about(
                    "Calibrated shot vs expansion profiles at boundary distances \
                     (tidy long-format table)",
                )
                .arg(nl_arg())
                .arg(dim_arg())
                .arg(d_grid_arg().required(true))
                .arg(usize_arg("kmax", "Highest profile iterate to compare").default_value("1"))
                .arg(f64_arg(
                    "u0",
                    "Start height (chosen automatically if absent)",
                ))
                .arg(f64_arg(
                    "umax",
                    "Grid top (defaults to the overflow-safe top)",
                ))
                .arg(usize_arg("grid", "Grid nodes").default_value("256"))
                .arg(f64_arg("tol", "Shot integrator tolerance").default_value("1e-9")),
        ))
}

fn nl_arg() -> Arg {
    Arg::new("nl")
        .long("nl")
        .value_name("SPEC")
        .required(true)
        .help("Nonlinearity: pow:<p>, exp, or expr:<formula>;a=<threshold>")
}

fn dim_arg() -> Arg {
    Arg::new("N")
        .long("N")
        .value_name("DIM")
        .required(true)
        .value_parser(clap::value_parser!(usize))
        .help("Space dimension (>= 1)")
}

fn f64_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("REAL")
        .value_parser(clap::value_parser!(f64))
        .help(help)
}

fn usize_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("INT")
        .value_parser(clap::value_parser!(usize))
        .help(help)
}

fn d_grid_arg() -> Arg {
    Arg::new("d-grid")
        .long("d-grid")
        .value_name("LIST")
        .help("Comma-separated boundary distances, e.g. 1e-1,1e-2,1e-3")
}

fn with_output(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("format")
            .long("format")
            .value_parser(["csv", "json"])
            .default_value("csv")
            .help("Output format"),
    )
    .arg(
        Arg::new("out")
            .long("out")
            .value_name("PATH")
            .help("Write the report to a file instead of stdout"),
    )
}

type CmdResult = Result<(RunReport, i32), Error>;

fn parse_nl(m: &ArgMatches) -> Result<Nonlinearity, Error> {
    Nonlinearity::parse(m.get_one::<String>("nl").expect("--nl is required"))
}

fn get_f64(m: &ArgMatches, name: &str) -> f64 {
    *m.get_one::<f64>(name).expect("defaulted or required")
}

fn get_usize(m: &ArgMatches, name: &str) -> usize {
    *m.get_one::<usize>(name).expect("defaulted or required")
}

// `!(d > 0.0)` rejects NaN along with nonpositive values.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn parse_d_grid(m: &ArgMatches) -> Result<Vec<f64>, Error> {
    let raw = m
        .get_one::<String>("d-grid")
        .ok_or_else(|| Error::Domain("this mode needs --d-grid".to_string()))?;
    let mut grid = Vec::new();
    for piece in raw.split(',') {
        let piece = piece.trim();
        let d: f64 = piece
            .parse()
            .map_err(|_| Error::Domain(format!("--d-grid entry `{piece}` is not a number")))?;
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!(
                "--d-grid entries must be positive and finite, got {d}"
            )));
        }
        grid.push(d);
    }
    if grid.is_empty() {
        return Err(Error::Domain("--d-grid must not be empty".to_string()));
    }
    Ok(grid)
}

/// Resolves the profile-grid triple (U0, Umax, nodes), choosing defaults
/// for whatever the command line left out.
fn resolve_grid(
    nl: &Nonlinearity,
    m: &ArgMatches,
    n_dim: usize,
    default_nodes: usize,
) -> Result<(f64, f64, usize), Error> {
    let u0 = match m.get_one::<f64>("u0") {
        Some(&v) => v,
        None => choose_u0(nl, n_dim)?,
    };
    let umax = match m.get_one::<f64>("umax") {
        Some(&v) => v,
        None => default_umax(nl, u0)?,
    };
    let nodes = m.get_one::<usize>("grid").copied().unwrap_or(default_nodes);
    Ok((u0, umax, nodes))
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn cmd_ko(m: &ArgMatches) -> CmdResult {
    let nl = parse_nl(m)?;
    let lo = get_f64(m, "lo");
    let tol = get_f64(m, "tol");
    let verdict = nl.keller_osserman(lo, tol)?;
    let mut r = RunReport::new("ko", Some(nl.spec_text()));
    r.param("lo", fmt_g(lo));
    r.param("tol", fmt_g(tol));
    r.columns = columns(&["status", "value", "error_estimate", "cutoff"]);
    let (row, status, code) = match verdict {
        KellerOsserman::Converges {
            value,
            error_estimate,
            cutoff,
        } => (
            vec![
                "converges".to_string(),
                fmt_g(value),
                fmt_g(error_estimate),
                fmt_g(cutoff),
            ],
            "converges",
            0,
        ),
        KellerOsserman::Diverges { cutoff } => (
            vec![
                "diverges".to_string(),
                String::new(),
                String::new(),
                fmt_g(cutoff),
            ],
            "diverges",
            2,
        ),
        KellerOsserman::Inconclusive { partial, cutoff } => (
            vec![
                "inconclusive".to_string(),
                fmt_g(partial),
                String::new(),
                fmt_g(cutoff),
            ],
            "inconclusive",
            3,
        ),
    };
    r.rows = vec![row];
    r.summarize("status", status);
    Ok((r, code))
}

fn cmd_expand(m: &ArgMatches) -> CmdResult {
    let nl = parse_nl(m)?;
    let n_dim = get_usize(m, "N");
    let tol = get_f64(m, "tol");
    let kmax = get_usize(m, "kmax");
    let (u0, umax, nodes) = resolve_grid(&nl, m, n_dim, 256)?;
    let conv = iterate_to_convergence_with(&nl, n_dim, u0, umax, nodes, tol, kmax)?;
    let mut r = RunReport::new("expand", Some(nl.spec_text()));
    r.param("N", n_dim.to_string());
    r.param("u0", fmt_g(u0));
    r.param("umax", fmt_g(umax));
    r.param("grid", nodes.to_string());
    r.param("tol", fmt_g(tol));
    r.param("kmax", kmax.to_string());
    r.columns = columns(&["k", "delta"]);
    r.rows = conv
        .deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| vec![(i + 1).to_string(), fmt_g(d)])
        .collect();
    r.summarize("converged", fmt_bool(conv.converged));
    r.summarize("geometric", fmt_bool(conv.geometric));
    r.summarize("iterations", conv.deltas.len().to_string());
    r.summarize("u0_used", fmt_g(conv.u0));
    Ok((r, 0))
}

/// Builds the k-th velocity iterate on the requested grid.
fn build_iterate(
    nl: &Nonlinearity,
    n_dim: usize,
    u0: f64,
    umax: f64,
    nodes: usize,
    k: usize,
) -> Result<VelocityProfile, Error> {
    let mut v = VelocityProfile::make_v0(nl, u0, umax, nodes)?;
    for _ in 0..k {
        v = v.iterate(n_dim)?;
    }
    Ok(v)
}

fn cmd_profile(m: &ArgMatches) -> CmdResult {
    let nl = parse_nl(m)?;
    let n_dim = get_usize(m, "N");
    let k = get_usize(m, "kmax");
    let d_grid = parse_d_grid(m)?;
    let (u0, umax, nodes) = resolve_grid(&nl, m, n_dim, 256)?;
    let v = build_iterate(&nl, n_dim, u0, umax, nodes, k)?;
    let profile = BlowupProfile::new(&v);
    let mut r = RunReport::new("profile", Some(nl.spec_text()));
    r.param("N", n_dim.to_string());
    r.param("k", k.to_string());
    r.param("u0", fmt_g(u0));
    r.param("umax", fmt_g(umax));
    r.param("grid", nodes.to_string());
    r.columns = columns(&["d", "u"]);
    for &d in &d_grid {
        let u = profile.u_at(d)?;
        r.rows.push(vec![fmt_g(d), fmt_g(u)]);
    }
    r.summarize("max_distance", fmt_g(v.max_distance()));
    Ok((r, 0))
}

fn cmd_criterion(m: &ArgMatches) -> CmdResult {
    let nl = parse_nl(m)?;
    if m.get_flag("along-profile") {
        let d_grid = parse_d_grid(m)?;
        let u0 = match m.get_one::<f64>("u0") {
            Some(&v) => v,
            // The starting profile is dimension-free; pick for the ball.
            None => choose_u0(&nl, 2)?,
        };
        let umax = match m.get_one::<f64>("umax") {
            Some(&v) => v,
            None => default_umax(&nl, u0)?,
        };
        let nodes = m.get_one::<usize>("grid").copied().unwrap_or(256);
        let v0 = VelocityProfile::make_v0(&nl, u0, umax, nodes)?;
        let profile = BlowupProfile::new(&v0);
        let rows = lambda_along_profile(&nl, &profile, &d_grid)?;
        let mut r = RunReport::new("criterion", Some(nl.spec_text()));
        r.param("mode", "along-profile");
        r.param("u0", fmt_g(u0));
        r.param("umax", fmt_g(umax));
        r.param("grid", nodes.to_string());
        r.columns = columns(&["d", "u", "lambda"]);
        r.rows = rows
            .iter()
            .map(|&(d, u, l)| vec![fmt_g(d), fmt_g(u), fmt_g(l)])
            .collect();
        return Ok((r, 0));
    }
    let (Some(&lo), Some(&hi)) = (m.get_one::<f64>("lo"), m.get_one::<f64>("hi")) else {
        return Err(Error::Domain(
            "criterion needs --lo and --hi (or --along-profile with --d-grid)".to_string(),
        ));
    };
    let samples = m.get_one::<usize>("grid").copied().unwrap_or(33);
    let rep = classify(&nl, lo, hi, samples)?;
    let mut r = RunReport::new("criterion", Some(nl.spec_text()));
    r.param("mode", "range");
    r.param("lo", fmt_g(lo));
    r.param("hi", fmt_g(hi));
    r.param("grid", samples.to_string());
    r.param("slope_cut", fmt_g(rep.thresholds.slope_cut));
    r.param("plateau_floor", fmt_g(rep.thresholds.plateau_floor));
    r.columns = columns(&["u", "lambda"]);
    r.rows = rep
        .samples
        .iter()
        .map(|&(u, l)| vec![fmt_g(u), fmt_g(l)])
        .collect();
    r.summarize("classification", rep.classification.as_str());
    if let Some(s) = rep.slope {
        r.summarize("slope", fmt_g(s));
    }
    if let Some(i) = rep.intercept {
        r.summarize("intercept", fmt_g(i));
    }
    if let Some((u, why)) = &rep.failure {
        r.summarize("failure", format!("at u = {}: {why}", fmt_g(*u)));
    }
    Ok((r, 0))
}

fn cmd_three_term(m: &ArgMatches) -> CmdResult {
    let nl = parse_nl(m)?;
    let n_dim = get_usize(m, "N");
    let base = m.get_one::<f64>("base").copied().unwrap_or_else(|| nl.a());
    let mut r = RunReport::new("three-term", Some(nl.spec_text()));
    r.param("N", n_dim.to_string());
    r.param("base", fmt_g(base));
    if m.get_one::<String>("d-grid").is_some() {
        let d_grid = parse_d_grid(m)?;
        r.param("mode", "invert");
        r.columns = columns(&["d", "u"]);
        for &d in &d_grid {
            let u = invert_three_term(&nl, n_dim, d, base)?;
            r.rows.push(vec![fmt_g(d), fmt_g(u)]);
        }
    } else {
        let Some(&u) = m.get_one::<f64>("u0") else {
            return Err(Error::Domain(
                "three-term needs --u0 (evaluation height) or --d-grid".to_string(),
            ));
        };
        r.param("mode", "remainders");
        let t = remainder_terms(&nl, n_dim, u, base)?;
        r.columns = columns(&["u", "r0", "r1", "r2", "total"]);
        r.rows = vec![vec![
            fmt_g(t.u),
            fmt_g(t.r0),
            fmt_g(t.r1),
            fmt_g(t.r2),
            fmt_g(t.r0 + t.r1 + t.r2),
        ]];
    }
    Ok((r, 0))
}

fn cmd_power_coeffs(m: &ArgMatches) -> CmdResult {
    let p = get_f64(m, "p");
    let n_dim = get_usize(m, "N");
    let order = get_usize(m, "order");
    let se = power_coefficients(p, n_dim, order)?;
    let mut r = RunReport::new("power-coeffs", None);
    r.param("p", fmt_g(p));
    r.param("N", n_dim.to_string());
    r.param("order", order.to_string());
    r.columns = columns(&["k", "a_k", "b_k"]);
    for k in 0..=order {
        r.rows
            .push(vec![k.to_string(), fmt_g(se.a[k]), fmt_g(se.b[k])]);
    }
    r.summarize("q", fmt_g(se.q));
    r.summarize("singular_count", se.singular_count.to_string());
    Ok((r, 0))
}

fn cmd_shoot(m: &ArgMatches) -> CmdResult {
    let nl = parse_nl(m)?;
    let n_dim = get_usize(m, "N");
    let alpha = get_f64(m, "alpha");
    let u_cap = get_f64(m, "umax");
    let tol = get_f64(m, "tol");
    let res = shoot(&nl, n_dim, alpha, u_cap, tol)?;
    let rows = diagnostics(&res, &nl)?;
    let mut r = RunReport::new("shoot", Some(nl.spec_text()));
    r.param("N", n_dim.to_string());
    r.param("alpha", fmt_g(alpha));
    r.param("umax", fmt_g(u_cap));
    r.param("tol", fmt_g(tol));
    r.columns = columns(&["u", "g", "ratio"]);
    r.rows = rows
        .iter()
        .map(|&(u, g, ratio)| vec![fmt_g(u), fmt_g(g), ratio.map(fmt_g).unwrap_or_default()])
        .collect();
    r.summarize("r_est", fmt_g(res.r_est));
    r.summarize("blew_up", fmt_bool(res.blew_up));
    r.summarize("partial", fmt_bool(res.partial));
    r.summarize("u_cap_effective", fmt_g(res.u_cap_effective));
    r.summarize("samples", res.samples.len().to_string());
    Ok((r, 0))
}

fn cmd_compare(m: &ArgMatches) -> CmdResult {
    let nl = parse_nl(m)?;
    let n_dim = get_usize(m, "N");
    let kmax = get_usize(m, "kmax");
    let d_grid = parse_d_grid(m)?;
    let tol = get_f64(m, "tol");
    let (u0, umax, nodes) = resolve_grid(&nl, m, n_dim, 256)?;

    let mut velocities = vec![VelocityProfile::make_v0(&nl, u0, umax, nodes)?];
    for _ in 0..kmax {
        let next = velocities.last().expect("nonempty").iterate(n_dim)?;
        velocities.push(next);
    }
    let profiles: Vec<BlowupProfile> = velocities.iter().map(BlowupProfile::new).collect();

    let alpha = calibrate_alpha(&nl, n_dim, 1.0, 1e-4)?;
    let res = shoot(&nl, n_dim, alpha, 1e6, tol)?;
    let rows = compare_to_expansion(&res, &profiles, &d_grid)?;

    let mut r = RunReport::new("compare", Some(nl.spec_text()));
    r.param("N", n_dim.to_string());
    r.param("kmax", kmax.to_string());
    r.param("u0", fmt_g(u0));
    r.param("umax", fmt_g(umax));
    r.param("grid", nodes.to_string());
    r.param("tol", fmt_g(tol));
    r.columns = columns(&[
        "d",
        "k",
        "u_profile",
        "u_shoot",
        "gap",
        "normalized_gap",
        "predicted_gap",
        "flagged",
    ]);
    for row in &rows {
        for (k, &uk) in row.u_profiles.iter().enumerate() {
            r.rows.push(vec![
                fmt_g(row.d),
                k.to_string(),
                fmt_g(uk),
                row.u_shoot.map(fmt_g).unwrap_or_default(),
                row.gaps.get(k).map(|&g| fmt_g(g)).unwrap_or_default(),
                row.normalized_gaps
                    .get(k)
                    .map(|&g| fmt_g(g))
                    .unwrap_or_default(),
                fmt_g(row.predicted_gap),
                fmt_bool(row.flagged),
            ]);
        }
    }
    r.summarize("alpha", fmt_g(alpha));
    r.summarize("r_est", fmt_g(res.r_est));
    r.summarize("profiles", (kmax + 1).to_string());
    Ok((r, 0))
}
