//! CSV and JSON output. CSV is comma-separated with a header row and LF line
//! endings; floats use Rust's shortest round-trip formatting.

use std::io::{self, Write};

use serde::{Serialize, Serializer};
use serde_json::{Map, Value};

use crate::es::RunTrace;
use crate::experiments::{DriftRow, SurvivalPoint};
use crate::rng::GENERATOR;

pub const SCHEMA_VERSION: u32 = 1;

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// `+inf` as the string `"inf"`; JSON has no infinity.
pub fn serialize_maybe_infinite<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_infinite() && *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> io::Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> io::Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        writeln!(self.out, "{}", fields.join(","))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Columns `t, m_1..m_d, sigma, f, accepted`.
pub fn write_trace_csv<W: Write>(out: W, trace: &RunTrace) -> io::Result<W> {
    let d = trace.final_state.m.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("m_{i}")));
    header.extend(["sigma", "f", "accepted"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvWriter::new(out, &header)?;
    for r in &trace.records {
        let mut fields = vec![r.t.to_string()];
        fields.extend(r.m.iter().map(|&x| fmt_f64(x)));
        fields.push(fmt_f64(r.sigma));
        fields.push(fmt_f64(r.f));
        fields.push(if r.accepted { "1" } else { "0" }.to_string());
        w.row(&fields)?;
    }
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    V,
    W,
    Phi,
}

impl Quantity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "V" | "v" => Some(Quantity::V),
            "W" | "w" => Some(Quantity::W),
            "Phi" | "phi" | "PHI" => Some(Quantity::Phi),
            _ => None,
        }
    }

    pub fn pick(self, row: &DriftRow) -> &crate::estimators::DriftEstimate {
        match self {
            Quantity::V => &row.v,
            Quantity::W => &row.w_drift,
            Quantity::Phi => &row.phi,
        }
    }
}

/// Columns `w, sigma_tilde, mean, stderr, ci_low, ci_high, n`.
pub fn write_drift_csv<W: Write>(out: W, rows: &[DriftRow], quantity: Quantity) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["w", "sigma_tilde", "mean", "stderr", "ci_low", "ci_high", "n"])?;
    for r in rows {
        let e = quantity.pick(r);
        w.row(&[
            fmt_f64(r.w),
            fmt_f64(r.sigma_tilde),
            fmt_f64(e.mean),
            fmt_f64(e.stderr),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
            e.n.to_string(),
        ])?;
    }
    w.finish()
}

/// Columns `t, S`.
pub fn write_survival_csv<W: Write>(out: W, survival: &[SurvivalPoint]) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["t", "S"])?;
    for p in survival {
        w.row(&[p.t.to_string(), fmt_f64(p.s)])?;
    }
    w.finish()
}

/// Wraps a serializable object as `{"schema": 1, "generator": ..., "kind": ..., <fields>}`.
pub fn envelope<T: Serialize>(kind: &str, body: &T) -> serde_json::Result<Value> {
    let mut obj = Map::new();
    obj.insert("schema".into(), Value::from(SCHEMA_VERSION));
    obj.insert("kind".into(), Value::from(kind));
    obj.insert("generator".into(), Value::from(GENERATOR));
    match serde_json::to_value(body)? {
        Value::Object(fields) => obj.extend(fields),
        other => {
            obj.insert("value".into(), other);
        }
    }
    Ok(Value::Object(obj))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string(value: &Value) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::es::{run, BudgetOnly, EsParams, EsState, RecordPolicy};
    use crate::problem::SaddleProblem;
    use crate::rng::stream;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 5e-324, 1.7976931348623157e308, -0.0, 123456789.125] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn trace_csv_layout() {
        let p = SaddleProblem::planar(-1.0, 1.0).unwrap();
        let init = EsState::new(vec![0.0, 1.0], 1.0).unwrap();
        let tr = run(&p, &EsParams::new(1.5, 3).unwrap(), &init, &mut stream(1), &BudgetOnly, RecordPolicy::Full).unwrap();
        let bytes = write_trace_csv(Vec::new(), &tr).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.split_terminator('\n').collect();
        assert_eq!(lines[0], "t,m_1,m_2,sigma,f,accepted");
        assert_eq!(lines[1], "0,0.0,1.0,1.0,1.0,0");
        assert_eq!(lines.len(), 5);
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn survival_csv_layout() {
        let pts = [SurvivalPoint { t: 0, s: 1.0 }, SurvivalPoint { t: 4, s: 0.25 }];
        let text = String::from_utf8(write_survival_csv(Vec::new(), &pts).unwrap()).unwrap();
        assert_eq!(text, "t,S\n0,1.0\n4,0.25\n");
    }

    #[test]
    fn envelope_fields() {
        #[derive(Serialize)]
        struct Body {
            x: f64,
            #[serde(serialize_with = "serialize_maybe_infinite")]
            s: f64,
        }
        let v = envelope("test", &Body { x: 0.5, s: f64::INFINITY }).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["kind"], "test");
        assert_eq!(v["generator"], GENERATOR);
        assert_eq!(v["x"], 0.5);
        assert_eq!(v["s"], "inf");
        assert!(to_json_string(&v).unwrap().ends_with("}\n"));
    }

    #[test]
    fn quantity_names() {
        assert_eq!(Quantity::parse("W"), Some(Quantity::W));
        assert_eq!(Quantity::parse("Phi"), Some(Quantity::Phi));
        assert_eq!(Quantity::parse("X"), None);
    }
}
