//! Report serialization: pretty JSON and round-trip-precision CSV.
//!
//! Every numeric written to disk is checked finite first — a NaN or Inf in a
//! report means an upstream bug, and silently serializing it (serde_json
//! would emit `null`) hides exactly the evidence a reader needs.

use serde::Serialize;
use serde_json::Value;

use fredholm_core::series::MinorValue;
use fredholm_core::solver::SolutionReport;
use fredholm_core::spectral_index::IndexReport;
use fredholm_core::{Complex, FredholmError, Result};

/// Complex number as an explicit `{re, im}` pair.
#[derive(Debug, Serialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<Complex> for ComplexJson {
    fn from(z: Complex) -> Self {
        ComplexJson { re: z.re, im: z.im }
    }
}

#[derive(Debug, Serialize)]
pub struct MinorValueJson {
    pub value: ComplexJson,
    pub terms_used: usize,
    pub truncation_bound: f64,
    pub quadrature_tail: f64,
}

impl From<&MinorValue> for MinorValueJson {
    fn from(m: &MinorValue) -> Self {
        MinorValueJson {
            value: m.value.into(),
            terms_used: m.terms_used,
            truncation_bound: m.truncation_bound,
            quadrature_tail: m.quadrature_tail,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IndexReportJson {
    pub lambda0: ComplexJson,
    pub d: usize,
    pub r: usize,
    pub base_s: Vec<f64>,
    pub base_t: Vec<f64>,
    pub delta: ComplexJson,
    pub search_grid_size: usize,
    pub zero_threshold: f64,
    pub anomalous_r: bool,
}

impl From<&IndexReport> for IndexReportJson {
    fn from(r: &IndexReport) -> Self {
        IndexReportJson {
            lambda0: r.lambda0.into(),
            d: r.d,
            r: r.r,
            base_s: r.base_s.clone(),
            base_t: r.base_t.clone(),
            delta: r.delta.into(),
            search_grid_size: r.search_grid_size,
            zero_threshold: r.zero_threshold,
            anomalous_r: r.anomalous_r,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolutionReportJson {
    pub index: IndexReportJson,
    pub adjoint_pairings: Vec<ComplexJson>,
    pub solvable: bool,
    pub has_particular: bool,
    pub homogeneous_dim: usize,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub condition: f64,
}

impl From<&SolutionReport> for SolutionReportJson {
    fn from(r: &SolutionReport) -> Self {
        SolutionReportJson {
            index: (&r.index).into(),
            adjoint_pairings: r.adjoint_pairings.iter().map(|&z| z.into()).collect(),
            solvable: r.solvable,
            has_particular: r.particular.is_some(),
            homogeneous_dim: r.homogeneous_basis.len(),
            residual_sup: r.residual_sup,
            residual_l2: r.residual_l2,
            condition: r.condition,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CheckJson {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ValidationJson {
    pub kernel: String,
    pub all_pass: bool,
    pub checks: Vec<CheckJson>,
}

#[derive(Debug, Serialize)]
pub struct ErrorJson {
    pub error: String,
}

/// Serializes a report as pretty JSON with a trailing newline, refusing any
/// non-finite number.
pub fn to_json_string<T: Serialize>(report: &T) -> Result<String> {
    let value = serde_json::to_value(report)
        .map_err(|e| FredholmError::InvalidConfig(format!("report serialization: {e}")))?;
    check_finite(&value, "$")?;
    let mut text = serde_json::to_string_pretty(&value)
        .map_err(|e| FredholmError::InvalidConfig(format!("report serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn check_finite(v: &Value, path: &str) -> Result<()> {
    match v {
        Value::Number(n) => {
            // Integers are always finite; only f64 can smuggle NaN/Inf, and
            // serde_json has already turned those into `null`.
            if n.as_f64().is_none() && n.as_i64().is_none() && n.as_u64().is_none() {
                return Err(non_finite(path));
            }
            Ok(())
        }
        Value::Null => Err(non_finite(path)),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                check_finite(item, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        Value::Object(map) => {
            for (k, item) in map {
                check_finite(item, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        Value::Bool(_) | Value::String(_) => Ok(()),
    }
}

fn non_finite(path: &str) -> FredholmError {
    FredholmError::InvalidConfig(format!(
        "report contains a non-finite number at {path}; refusing to serialize"
    ))
}

/// Formats one float at full round-trip precision (17 significant digits).
pub fn csv_number(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(FredholmError::InvalidConfig(
            "report contains a non-finite number; refusing to serialize".into(),
        ));
    }
    Ok(format!("{x:.16e}"))
}

/// Builds a CSV document from a header and rows of floats.
pub fn csv_document(header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| csv_number(x)).collect::<Result<_>>()?;
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_pretty_with_trailing_newline() {
        let text = to_json_string(&ErrorJson { error: "x".into() }).unwrap();
        assert!(text.ends_with("}\n"));
        assert!(text.contains("\n  \"error\""));
    }

    #[test]
    fn non_finite_numbers_are_refused_with_a_path() {
        #[derive(Serialize)]
        struct Bad {
            ok: f64,
            bad: Vec<f64>,
        }
        let err = to_json_string(&Bad { ok: 1.0, bad: vec![0.0, f64::NAN] }).unwrap_err();
        assert!(err.to_string().contains("$.bad[1]"), "got: {err}");
    }

    #[test]
    fn csv_numbers_round_trip() {
        for &x in &[0.0, 1.0, -1.2533141373155003, 3.9e-300, f64::MIN_POSITIVE] {
            let s = csv_number(x).unwrap();
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
        assert!(csv_number(f64::INFINITY).is_err());
    }

    #[test]
    fn csv_document_layout() {
        let doc = csv_document(&["a", "b"], &[vec![1.0, 2.0]]).unwrap();
        let mut lines = doc.lines();
        assert_eq!(lines.next(), Some("a,b"));
        assert_eq!(lines.next(), Some("1.0000000000000000e0,2.0000000000000000e0"));
        assert_eq!(lines.next(), None);
    }
}
