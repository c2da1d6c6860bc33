//! Check reports shared by the validators.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub witness: Value,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub check: String,
    pub checked: BTreeMap<String, Value>,
    pub passed: bool,
    pub failures: Vec<Failure>,
}

impl Report {
    pub fn new(check: &str) -> Report {
        Report {
            check: check.into(),
            checked: BTreeMap::new(),
            passed: true,
            failures: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Report {
        self.checked.insert(key.into(), value.into());
        self
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.checked.insert(key.into(), value.into());
    }

    pub fn fail(&mut self, witness: impl Into<Value>, detail: impl Into<String>) {
        self.passed = false;
        self.failures.push(Failure {
            witness: witness.into(),
            detail: detail.into(),
        });
    }

    /// Failures whose detail starts with `prefix`.
    pub fn failures_for(&self, prefix: &str) -> Vec<&Failure> {
        self.failures
            .iter()
            .filter(|f| f.detail.starts_with(prefix))
            .collect()
    }

    /// One-line summary for text output.
    pub fn summary(&self) -> String {
        let status = if self.passed { "pass" } else { "FAIL" };
        let checked: Vec<String> = self
            .checked
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let mut s = format!("{}: {} ({})", self.check, status, checked.join(", "));
        for f in self.failures.iter().take(5) {
            s.push_str(&format!("\n  witness {}: {}", f.witness, f.detail));
        }
        if self.failures.len() > 5 {
            s.push_str(&format!("\n  … {} more", self.failures.len() - 5));
        }
        s
    }
}
