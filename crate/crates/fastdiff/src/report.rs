//! Deterministic serialization of trajectories, fits and verdicts.
//!
//! Floats print with 17 significant digits, enough to round-trip `f64`
//! exactly, so re-reading a CSV and re-running a fit reproduces slopes to
//! machine precision and identical runs produce byte-identical files.

use crate::diagnostics::{RateFit, Verdict};
use crate::domain::DomainRecord;
use crate::flow::TrajectoryRecord;

/// Canonical float format: 17 significant digits, scientific.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "Inf".to_string() } else { "-Inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

/// Header of the sphere-run trajectory CSV; the column set is part of the
/// artifact's file contract.
pub const SPHERE_CSV_HEADER: &str = "tau,J_gap,hs_dist,lambda_star,relerr_sup,residual_weighted,dissipation_residual,sigma_0,sigma_2,sigma_3,sigma_4";

/// Header of the bounded-domain trajectory CSV.
pub const DOMAIN_CSV_HEADER: &str = "tau,H_norm,relerr_sup,J_gap";

/// Serialize a sphere trajectory.
pub fn serialize_trajectory(records: &[TrajectoryRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(SPHERE_CSV_HEADER);
    out.push('\n');
    for r in records {
        let cols = [
            r.tau,
            r.j_gap,
            r.hs_dist,
            r.lambda_star,
            r.relerr_sup,
            r.residual_weighted,
            r.dissipation_residual,
            r.sigma[0],
            r.sigma[2],
            r.sigma[3],
            r.sigma[4],
        ];
        let row: Vec<String> = cols.iter().map(|&v| fmt_float(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Serialize a bounded-domain trajectory.
pub fn serialize_domain_trajectory(records: &[DomainRecord]) -> String {
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(DOMAIN_CSV_HEADER);
    out.push('\n');
    for r in records {
        let cols = [r.tau, r.h_norm, r.relerr_sup, r.j_gap];
        let row: Vec<String> = cols.iter().map(|&v| fmt_float(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parse a trajectory CSV back into named columns.
pub fn parse_csv(text: &str) -> crate::error::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| crate::error::Error::Input("empty CSV".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns = vec![Vec::new(); names.len()];
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(crate::error::Error::Input(format!(
                "row {} has {} fields, expected {}",
                ln + 2,
                fields.len(),
                names.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(&fields) {
            let value = field.trim().parse::<f64>().map_err(|e| {
                crate::error::Error::Input(format!("bad float in row {}: {e}", ln + 2))
            })?;
            col.push(value);
        }
    }
    Ok((names, columns))
}

/// Minimal ordered JSON writer; no escaping beyond the basics because all
/// keys and values the reports emit are plain ASCII.
#[derive(Debug, Default)]
pub struct Json {
    buf: String,
    first: Vec<bool>,
}

impl Json {
    pub fn object() -> Self {
        let mut j = Json { buf: String::new(), first: vec![true] };
        j.buf.push('{');
        j
    }

    fn comma(&mut self) {
        if let Some(first) = self.first.last_mut() {
            if *first {
                *first = false;
            } else {
                self.buf.push(',');
            }
        }
    }

    pub fn key(&mut self, k: &str) -> &mut Self {
        self.comma();
        self.buf.push('"');
        self.buf.push_str(&escape(k));
        self.buf.push_str("\":");
        if let Some(first) = self.first.last_mut() {
            *first = true; // value follows without comma
        }
        self
    }

    pub fn str_val(&mut self, v: &str) -> &mut Self {
        self.end_value();
        self.buf.push('"');
        self.buf.push_str(&escape(v));
        self.buf.push('"');
        self
    }

    /// Numbers print through [`fmt_float`]; non-finite values become strings,
    /// keeping the document parseable by any JSON reader.
    pub fn num_val(&mut self, v: f64) -> &mut Self {
        self.end_value();
        if v.is_finite() {
            self.buf.push_str(&fmt_float(v));
        } else {
            self.buf.push('"');
            self.buf.push_str(&fmt_float(v));
            self.buf.push('"');
        }
        self
    }

    pub fn int_val(&mut self, v: i64) -> &mut Self {
        self.end_value();
        self.buf.push_str(&v.to_string());
        self
    }

    pub fn bool_val(&mut self, v: bool) -> &mut Self {
        self.end_value();
        self.buf.push_str(if v { "true" } else { "false" });
        self
    }

    pub fn begin_object(&mut self) -> &mut Self {
        self.end_value();
        self.buf.push('{');
        self.first.push(true);
        self
    }

    pub fn end_object(&mut self) -> &mut Self {
        self.buf.push('}');
        self.first.pop();
        self
    }

    pub fn begin_array(&mut self) -> &mut Self {
        self.end_value();
        self.buf.push('[');
        self.first.push(true);
        self
    }

    pub fn end_array(&mut self) -> &mut Self {
        self.buf.push(']');
        self.first.pop();
        self
    }

    fn end_value(&mut self) {
        // called right before a value: if we are inside an array, separate
        if let Some(first) = self.first.last_mut() {
            if *first {
                *first = false;
            } else {
                self.buf.push(',');
            }
        }
    }

    pub fn array_num(&mut self, vals: &[f64]) -> &mut Self {
        self.begin_array();
        for &v in vals {
            self.num_val(v);
        }
        self.end_array()
    }

    pub fn finish(mut self) -> String {
        self.buf.push('}');
        self.buf.push('\n');
        self.buf
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Append one fit as a JSON object.
pub fn json_fit(json: &mut Json, name: &str, fit: &RateFit) {
    json.key(name).begin_object();
    json.key("slope").num_val(fit.slope);
    json.key("intercept").num_val(fit.intercept);
    json.key("r_squared").num_val(fit.r_squared);
    json.key("window_lo").num_val(fit.window.lo);
    json.key("window_hi").num_val(fit.window.hi);
    json.key("n_points").int_val(fit.n_points as i64);
    json.end_object();
}

/// Append the verdict array; each verdict carries the formula it used.
pub fn json_verdicts(json: &mut Json, verdicts: &[Verdict]) {
    json.key("verdicts").begin_array();
    for v in verdicts {
        json.begin_object();
        json.key("check").str_val(&v.check);
        json.key("formula").str_val(&v.formula);
        json.key("expected").num_val(v.expected);
        json.key("observed").num_val(v.observed);
        json.key("tolerance").num_val(v.tolerance);
        json.key("one_sided").bool_val(v.one_sided);
        json.key("pass").bool_val(v.pass);
        json.end_object();
    }
    json.end_array();
}

/// Verdicts table as TSV: check-name, expected, observed, tolerance, pass.
pub fn verdicts_tsv(verdicts: &[Verdict]) -> String {
    let mut out = String::from("check\texpected\tobserved\ttolerance\tpass\n");
    for v in verdicts {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            v.check,
            fmt_float(v.expected),
            fmt_float(v.observed),
            fmt_float(v.tolerance),
            if v.pass { "pass" } else { "FAIL" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Window;

    #[test]
    fn float_format_round_trips() {
        for &x in &[
            1.0,
            -0.1,
            std::f64::consts::PI,
            1.2345678901234567e-13,
            6.02e23,
            -7.25e-300,
        ] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_float(f64::NAN), "NaN");
        assert_eq!(fmt_float(f64::INFINITY), "Inf");
    }

    #[test]
    fn csv_header_is_byte_exact() {
        assert_eq!(
            SPHERE_CSV_HEADER,
            "tau,J_gap,hs_dist,lambda_star,relerr_sup,residual_weighted,dissipation_residual,sigma_0,sigma_2,sigma_3,sigma_4"
        );
        assert_eq!(DOMAIN_CSV_HEADER, "tau,H_norm,relerr_sup,J_gap");
    }

    #[test]
    fn csv_round_trip_preserves_fit() {
        use crate::diagnostics::fit_rate;
        let series: Vec<(f64, f64)> = (0..30)
            .map(|k| {
                let tau = 0.3 * k as f64;
                (tau, 2.0 * (-0.5 * tau).exp())
            })
            .collect();
        let fit1 = fit_rate(&series, Window { lo: 0.0, hi: 10.0 }).unwrap();

        let mut csv = String::from("tau,value\n");
        for &(t, v) in &series {
            csv.push_str(&format!("{},{}\n", fmt_float(t), fmt_float(v)));
        }
        let (names, cols) = parse_csv(&csv).unwrap();
        assert_eq!(names, vec!["tau", "value"]);
        let series2: Vec<(f64, f64)> =
            cols[0].iter().zip(&cols[1]).map(|(&t, &v)| (t, v)).collect();
        let fit2 = fit_rate(&series2, Window { lo: 0.0, hi: 10.0 }).unwrap();
        assert!((fit1.slope - fit2.slope).abs() < 1e-12);
    }

    #[test]
    fn json_structure_and_sentinels() {
        let mut j = Json::object();
        j.key("name").str_val("spectrum");
        j.key("gap").num_val(1.0);
        j.key("bad").num_val(f64::NAN);
        j.key("list").array_num(&[1.0, 2.0]);
        j.key("nested").begin_object();
        j.key("x").int_val(3);
        j.end_object();
        let s = j.finish();
        assert!(s.contains("\"name\":\"spectrum\""));
        assert!(s.contains("\"bad\":\"NaN\""));
        assert!(s.contains("\"list\":[1.0000000000000000e0,2.0000000000000000e0]"));
        assert!(s.contains("\"nested\":{\"x\":3}"));
        // crude balance check: equal braces, no trailing commas
        assert_eq!(s.matches('{').count(), s.matches('}').count());
        assert!(!s.contains(",}") && !s.contains(",]"));
    }
}
