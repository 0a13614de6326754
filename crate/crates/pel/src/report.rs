//! The metric report document and its JSON form.
//!
//! Maps are `BTreeMap`s so serialisation order is fixed. Non-finite reals
//! are written as the strings `"+inf"`, `"-inf"` and `"nan"`.

use std::collections::BTreeMap;

use pel_core::metrics::Curve;
use pel_core::theory::TheoryVerdict;
use serde::{Deserialize, Serialize};

use crate::error::{PelError, Result};

pub const REPORT_FORMAT: &str = "pel-metric-report/1";

/// A reported real, or a sentinel string when it is not finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl Value {
    pub fn real(v: f64) -> Self {
        if v.is_finite() {
            // folds -0 into +0
            Value::Num(v + 0.0)
        } else if v.is_nan() {
            Value::Text("nan".into())
        } else if v > 0.0 {
            Value::Text("+inf".into())
        } else {
            Value::Text("-inf".into())
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    /// The real behind the value, mapping sentinels back to non-finite
    /// numbers. Plain text gives `None`.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Text(t) => match t.as_str() {
                "+inf" => Some(f64::INFINITY),
                "-inf" => Some(f64::NEG_INFINITY),
                "nan" => Some(f64::NAN),
                _ => None,
            },
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::real(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Num(v as f64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NotApplicable,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub status: Status,
    pub values: BTreeMap<String, Value>,
    /// Estimator settings: sample sizes, grids, probe configuration.
    pub meta: BTreeMap<String, Value>,
    pub notes: Vec<String>,
}

impl MetricEntry {
    pub fn ok() -> Self {
        Self {
            status: Status::Ok,
            values: BTreeMap::new(),
            meta: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn not_applicable(reason: impl Into<String>) -> Self {
        Self {
            status: Status::NotApplicable,
            notes: vec![reason.into()],
            ..Self::ok()
        }
    }

    pub fn failed(reason: impl Into<String>) -> Self {
        Self {
            status: Status::Failed,
            notes: vec![reason.into()],
            ..Self::ok()
        }
    }

    pub fn value(mut self, k: &str, v: impl Into<Value>) -> Self {
        self.values.insert(k.into(), v.into());
        self
    }

    pub fn meta(mut self, k: &str, v: impl Into<Value>) -> Self {
        self.meta.insert(k.into(), v.into());
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    pub fn get(&self, k: &str) -> Option<f64> {
        self.values.get(k).and_then(Value::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub alphas: Vec<Value>,
    pub values: Vec<Value>,
    pub auc: Value,
    /// CSV file holding the same points, relative to the report.
    pub csv: String,
}

impl CurveRecord {
    pub fn new(c: &Curve, csv: &str) -> Self {
        Self {
            alphas: c.alphas.iter().map(|&a| Value::real(a)).collect(),
            values: c.values.iter().map(|&a| Value::real(a)).collect(),
            auc: Value::real(c.auc),
            csv: csv.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: Value,
    pub tolerance: Value,
    /// `at_most` or `above`.
    pub bound: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub name: String,
    pub pass: bool,
    /// The outcome the theory predicts for this setting.
    pub expected_pass: bool,
    pub matches_expectation: bool,
    pub checks: Vec<CheckRecord>,
    pub diagnostics: BTreeMap<String, Value>,
    pub notes: Vec<String>,
}

impl VerdictRecord {
    pub fn new(v: &TheoryVerdict, expected_pass: bool) -> Self {
        Self {
            name: v.name.clone(),
            pass: v.pass,
            expected_pass,
            matches_expectation: v.pass == expected_pass,
            checks: v
                .checks
                .iter()
                .map(|c| CheckRecord {
                    name: c.name.clone(),
                    value: Value::real(c.value),
                    tolerance: Value::real(c.tolerance),
                    bound: if c.upper_bound { "at_most" } else { "above" }.into(),
                    ok: c.ok,
                })
                .collect(),
            diagnostics: v
                .diagnostics
                .iter()
                .map(|(k, x)| (k.clone(), Value::real(*x)))
                .collect(),
            notes: v.notes.clone(),
        }
    }

    pub fn diagnostic(&self, k: &str) -> Option<f64> {
        self.diagnostics.get(k).and_then(Value::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub step: usize,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub format: String,
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, MetricEntry>,
    pub curves: BTreeMap<String, CurveRecord>,
    pub theory: Vec<VerdictRecord>,
    pub snapshots: Vec<SnapshotRef>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn new(name: &str, config_hash: &str, seed: u64, config: &[(&str, &str)]) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            name: name.into(),
            config_hash: config_hash.into(),
            seed,
            config: config.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            metrics: BTreeMap::new(),
            curves: BTreeMap::new(),
            theory: Vec::new(),
            snapshots: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<&MetricEntry> {
        self.metrics.get(name)
    }

    /// Whether every theory verdict came out as the theory predicts.
    pub fn verdicts_as_expected(&self) -> bool {
        self.theory.iter().all(|v| v.matches_expectation)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are always serialisable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PelError::Format(format!("metric report: {e}")))
    }
}
