use serde::{Deserialize, Serialize};

/// Outcome of one numerical check: what was measured, the budget it was held
/// to, and whether it stayed within it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    /// NaN when the check could not be evaluated (written as `null`).
    #[serde(deserialize_with = "nan_from_null")]
    pub observed: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub bound: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Report {
    /// Passes when `observed <= bound`.
    pub fn upper(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            pass: observed <= bound,
            detail: String::new(),
        }
    }

    pub fn new(name: impl Into<String>, observed: f64, bound: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            pass,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// One human-readable line, `[PASS] name: observed <= bound (detail)`.
    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!(
            "[{tag}] {}: observed {:.6e}, bound {:.6e}",
            self.name, self.observed, self.bound
        );
        if !self.detail.is_empty() {
            s.push_str(" (");
            s.push_str(&self.detail);
            s.push(')');
        }
        s
    }
}

/// All reports pass.
pub fn all_pass(reports: &[Report]) -> bool {
    reports.iter().all(|r| r.pass)
}
