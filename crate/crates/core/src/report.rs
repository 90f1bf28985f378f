//! Verification records.
//!
//! [`Record`] is the JSON-lines schema written by the command-line front end:
//! `{command, params, lhs, rhs, ratio, error_estimate, pass, notes}`. Field and
//! parameter order is fixed (`BTreeMap`), so identical inputs give identical
//! bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub type Params = BTreeMap<String, Value>;

/// How a quantity was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Mc,
}

/// `lhs / rhs`, defined as 0 when both sides vanish.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Outcome of checking one inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub method: Method,
    /// Combined error estimate on `rhs` (quadrature plus Monte Carlo).
    pub error_estimate: f64,
    pub params: Params,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl InequalityReport {
    pub fn to_record(&self, command: &str) -> Record {
        let mut params = self.params.clone();
        params.insert("method".into(), serde_json::to_value(self.method).expect("enum"));
        Record {
            command: command.to_string(),
            params,
            lhs: Some(self.lhs),
            rhs: Some(self.rhs),
            ratio: Some(self.ratio),
            error_estimate: Some(self.error_estimate),
            pass: self.pass,
            notes: self.notes.join("; "),
        }
    }
}

/// One JSON-lines report record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub command: String,
    pub params: Params,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub ratio: Option<f64>,
    pub error_estimate: Option<f64>,
    pub pass: bool,
    pub notes: String,
}

impl Record {
    pub fn new(command: &str) -> Self {
        Record {
            command: command.to_string(),
            params: Params::new(),
            lhs: None,
            rhs: None,
            ratio: None,
            error_estimate: None,
            pass: true,
            notes: String::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn sides(mut self, lhs: f64, rhs: f64) -> Self {
        self.lhs = Some(lhs);
        self.rhs = Some(rhs);
        self.ratio = Some(ratio(lhs, rhs));
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

/// Convenience for building parameter echoes.
#[macro_export]
macro_rules! params {
    ($($key:expr => $value:expr),* $(,)?) => {{
        let mut map = $crate::report::Params::new();
        $(map.insert($key.to_string(), serde_json::json!($value));)*
        map
    }};
}
