//! Experiment reports and their JSON schema.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Published schema for [`ExperimentReport`] JSON.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Value quoted from the source formulas.
    Paper,
    /// Value computed from an independent oracle.
    Derived,
    Trivial,
    /// Trend or histogram without a reference; never gates the exit code.
    ReferenceFree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub reference: Option<f64>,
    pub provenance: Provenance,
    pub tolerance: Option<String>,
    pub pass: Option<bool>,
    pub note: Option<String>,
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::MAX.copysign(v)
    }
}

impl Statistic {
    fn make(name: &str, value: f64, reference: Option<f64>, provenance: Provenance, tolerance: Option<String>, pass: Option<bool>) -> Self {
        Statistic {
            name: name.to_string(),
            value: finite(value),
            reference: reference.map(finite),
            provenance,
            tolerance,
            pass,
            note: None,
        }
    }

    /// |value - reference| <= tol.
    pub fn close(name: &str, value: f64, reference: f64, tol: f64, provenance: Provenance) -> Self {
        let pass = (value - reference).abs() <= tol;
        Self::make(name, value, Some(reference), provenance, Some(format!("abs {tol:e}")), Some(pass))
    }

    /// |value - reference| <= rel * |reference|.
    pub fn relative(name: &str, value: f64, reference: f64, rel: f64, provenance: Provenance) -> Self {
        let pass = (value - reference).abs() <= rel * reference.abs();
        Self::make(name, value, Some(reference), provenance, Some(format!("rel {rel:e}")), Some(pass))
    }

    /// Binomial frequency `hits / trials` within `k` standard deviations of `p`.
    pub fn binomial(name: &str, hits: u64, trials: u64, p: f64, k: f64, provenance: Provenance) -> Self {
        let freq = if trials == 0 { f64::NAN } else { hits as f64 / trials as f64 };
        let sigma = (p * (1.0 - p) / trials.max(1) as f64).sqrt();
        let pass = trials > 0 && (freq - p).abs() <= k * sigma;
        let mut s = Self::make(name, if trials == 0 { 0.0 } else { freq }, Some(p), provenance, Some(format!("{k} sigma")), Some(pass));
        s.note = Some(format!("{hits}/{trials}, sigma {sigma:.3e}"));
        s
    }

    /// value < bound, reported against a reference of 0.
    pub fn below(name: &str, value: f64, bound: f64, provenance: Provenance) -> Self {
        Self::make(name, value, Some(0.0), provenance, Some(format!("< {bound}")), Some(value < bound))
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64, provenance: Provenance) -> Self {
        let pass = (lo..=hi).contains(&value);
        Self::make(name, value, None, provenance, Some(format!("in [{lo}, {hi}]")), Some(pass))
    }

    /// A boolean check, reported as 1 or 0 against a reference of 1.
    pub fn check(name: &str, ok: bool, provenance: Provenance) -> Self {
        Self::make(name, if ok { 1.0 } else { 0.0 }, Some(1.0), provenance, Some("exact".into()), Some(ok))
    }

    /// Reference-free value.
    pub fn observe(name: &str, value: f64) -> Self {
        Self::make(name, value, None, Provenance::ReferenceFree, None, None)
    }

    /// Reference-free value shown next to a target it is expected to
    /// approach; the comparison does not gate.
    pub fn observe_against(name: &str, value: f64, target: f64) -> Self {
        Self::make(name, value, Some(target), Provenance::ReferenceFree, None, None)
    }

    /// Trend comparison that is reported but never gates.
    pub fn trend(name: &str, value: f64, holds: bool) -> Self {
        Self::make(name, value, None, Provenance::ReferenceFree, Some("one-sided trend".into()), Some(holds))
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn gates(&self) -> bool {
        self.provenance != Provenance::ReferenceFree && self.pass.is_some()
    }

    pub fn failed(&self) -> bool {
        self.gates() && self.pass == Some(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, Value>,
    pub statistics: Vec<Statistic>,
    pub replicates: u64,
    pub censored: u64,
    pub wall_clock_seconds: f64,
    /// Free-form audit records such as counterexample witnesses.
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn new(id: &str, seed: u64) -> Self {
        ExperimentReport {
            id: id.to_string(),
            seed,
            parameters: BTreeMap::new(),
            statistics: Vec::new(),
            replicates: 0,
            censored: 0,
            wall_clock_seconds: 0.0,
            artifacts: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn push(&mut self, s: Statistic) {
        self.statistics.push(s);
    }

    pub fn stat(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.name == name)
    }

    /// True when no gating statistic failed.
    pub fn passed(&self) -> bool {
        !self.statistics.iter().any(Statistic::failed)
    }

    /// Everything except the wall clock.
    pub fn same_results(&self, other: &ExperimentReport) -> bool {
        let mut a = self.clone();
        a.wall_clock_seconds = other.wall_clock_seconds;
        a == *other
    }

    /// Concatenates parts under a new id; parameters are prefixed by the
    /// part id.
    pub fn merge(id: &str, seed: u64, parts: Vec<ExperimentReport>) -> Self {
        let mut out = ExperimentReport::new(id, seed);
        for p in parts {
            for (k, v) in p.parameters {
                out.parameters.insert(format!("{}.{k}", p.id), v);
            }
            out.statistics.extend(p.statistics);
            out.replicates += p.replicates;
            out.censored += p.censored;
            out.wall_clock_seconds += p.wall_clock_seconds;
            out.artifacts.extend(p.artifacts);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One line per statistic.
    pub fn to_text(&self) -> String {
        let mut s = format!("# {} seed {} replicates {} censored {}\n", self.id, self.seed, self.replicates, self.censored);
        for st in &self.statistics {
            let status = match (st.gates(), st.pass) {
                (true, Some(true)) => "PASS",
                (true, Some(false)) => "FAIL",
                (false, Some(true)) => "trend-ok",
                (false, Some(false)) => "trend-no",
                _ => "info",
            };
            let _ = write!(s, "{status:8} {:48} {}", st.name, num(st.value));
            if let Some(r) = st.reference {
                let _ = write!(s, " ref {}", num(r));
            }
            if let Some(t) = &st.tolerance {
                let _ = write!(s, " ({t})");
            }
            if let Some(n) = &st.note {
                let _ = write!(s, " [{n}]");
            }
            s.push('\n');
        }
        s
    }
}

fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    }
}

/// Validates `instance` against the subset of JSON Schema used by the
/// report schema: `type`, `enum`, `required`, `properties`,
/// `additionalProperties: false`, `items` and `minimum`.
pub fn validate_json(schema: &Value, instance: &Value) -> Result<(), String> {
    validate_at(schema, instance, "$")
}

pub fn validate_report_json(text: &str) -> Result<(), String> {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).map_err(|e| format!("schema: {e}"))?;
    let instance: Value = serde_json::from_str(text).map_err(|e| format!("line {} column {}: {e}", e.line(), e.column()))?;
    validate_json(&schema, &instance)
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        _ => false,
    }
}

fn validate_at(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let ok = match t {
            Value::String(t) => type_matches(t, v),
            Value::Array(ts) => ts.iter().filter_map(Value::as_str).any(|t| type_matches(t, v)),
            _ => return Err(format!("{path}: unsupported type keyword")),
        };
        if !ok {
            return Err(format!("{path}: expected type {t}"));
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            return Err(format!("{path}: value not in enum"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            return Err(format!("{path}: below minimum {min}"));
        }
    }
    if let Value::Object(map) = v {
        if let Some(Value::Array(req)) = schema.get("required") {
            for r in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(r) {
                    return Err(format!("{path}: missing `{r}`"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, child) in map {
            match props.and_then(|p| p.get(k)) {
                Some(s) => validate_at(s, child, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected `{k}`"));
                }
                None => {}
            }
        }
    }
    if let (Value::Array(items), Some(s)) = (v, schema.get("items")) {
        for (i, item) in items.iter().enumerate() {
            validate_at(s, item, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}
