//! Run reports: a single serializable record of one command invocation,
//! rendered as CSV (payload first, metadata as trailing comment lines) or
//! as JSON mirroring the fields verbatim.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Current report schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// One command's worth of results.
///
/// All numeric payloads are pre-formatted to 9 significant digits, so the
/// two output formats carry identical information and the record
/// round-trips exactly through either.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    /// The nonlinearity spec as given on the command line, when the
    /// command takes one.
    pub nl: Option<String>,
    /// Echo of the effective parameters (defaults resolved).
    pub params: BTreeMap<String, String>,
    /// Column names for `rows`.
    pub columns: Vec<String>,
    /// Payload rows; empty cells stand for inapplicable values.
    pub rows: Vec<Vec<String>>,
    /// Headline results (classifications, fitted slopes, radii, flags).
    pub summary: BTreeMap<String, String>,
}

impl RunReport {
    pub fn new(command: &str, nl: Option<&str>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            nl: nl.map(str::to_string),
            params: BTreeMap::new(),
            columns: Vec::new(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn summarize(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.summary.insert(key.to_string(), value.into());
        self
    }

    /// Renders the report as CSV: header line, payload rows, then the
    /// metadata as `#`-prefixed comment lines in a fixed order.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&join_csv(&self.columns));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&join_csv(row));
            out.push('\n');
        }
        out.push_str(&format!("# schema_version,{}\n", self.schema_version));
        out.push_str(&format!("# command,{}\n", csv_field(&self.command)));
        if let Some(nl) = &self.nl {
            out.push_str(&format!("# nl,{}\n", csv_field(nl)));
        }
        for (k, v) in &self.params {
            out.push_str(&format!("# param,{},{}\n", csv_field(k), csv_field(v)));
        }
        for (k, v) in &self.summary {
            out.push_str(&format!("# summary,{},{}\n", csv_field(k), csv_field(v)));
        }
        out
    }

    /// Renders the report as pretty-printed JSON.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn join_csv(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_field(f))
        .collect::<Vec<_>>()
        .join(",")
}

/// Quotes a CSV field only when it needs it.
fn csv_field(f: &str) -> String {
    if f.contains(',') || f.contains('"') || f.contains('\n') {
        format!("\"{}\"", f.replace('"', "\"\""))
    } else {
        f.to_string()
    }
}

/// Formats a float with 9 significant digits: fixed notation for moderate
/// exponents, scientific otherwise, trailing zeros kept so column widths
/// stay stable.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    // Decimal exponent after rounding to 9 significant digits.
    let sci = format!("{:.8e}", x);
    let exp: i32 = sci
        .split('e')
        .nth(1)
        .expect("scientific notation has an exponent")
        .parse()
        .expect("exponent parses");
    if (-4..9).contains(&exp) {
        format!("{:.*}", (8 - exp).max(0) as usize, x)
    } else {
        sci
    }
}

/// Formats a boolean the same way in both output formats.
pub fn fmt_bool(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits_in_fixed_notation() {
        assert_eq!(fmt_g(2.0), "2.00000000");
        assert_eq!(fmt_g(0.235702260), "0.235702260");
        assert_eq!(fmt_g(123456789.0), "123456789");
        assert_eq!(fmt_g(-1.5), "-1.50000000");
        assert_eq!(fmt_g(0.0001), "0.000100000000");
    }

    #[test]
    fn scientific_notation_outside_the_fixed_window() {
        assert_eq!(fmt_g(1e-5), "1.00000000e-5");
        assert_eq!(fmt_g(8.66025404e-13), "8.66025404e-13");
        assert_eq!(fmt_g(1.23456789e12), "1.23456789e12");
    }

    #[test]
    fn rounding_carries_into_the_exponent() {
        assert_eq!(fmt_g(9.999999999e8), "1.00000000e9");
        assert_eq!(fmt_g(0.99999999999), "1.00000000");
    }

    #[test]
    fn non_finite_values_have_stable_spellings() {
        assert_eq!(fmt_g(f64::INFINITY), "inf");
        assert_eq!(fmt_g(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_g(f64::NAN), "nan");
        assert_eq!(fmt_g(0.0), "0.00000000");
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut r = RunReport::new("ko", Some("pow:3"));
        r.param("lo", fmt_g(1.0));
        r.columns = vec!["status".into(), "value".into()];
        r.rows = vec![vec!["converges".into(), fmt_g(2.0)]];
        r.summarize("status", "converges");
        let parsed: RunReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn csv_starts_with_the_header_and_ends_with_metadata() {
        let mut r = RunReport::new("ko", Some("pow:3"));
        r.param("lo", "1.00000000");
        r.columns = vec!["status".into(), "value".into()];
        r.rows = vec![vec!["converges".into(), "2.00000000".into()]];
        r.summarize("status", "converges");
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "status,value");
        assert_eq!(lines[1], "converges,2.00000000");
        assert!(lines[2..].iter().all(|l| l.starts_with("# ")));
        assert!(lines.contains(&"# param,lo,1.00000000"));
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
