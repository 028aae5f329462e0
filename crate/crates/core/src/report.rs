//! Inequality check reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Relative slack of explicit-constant checks.
pub const EXPLICIT_TOL: f64 = 1e-9;

/// Whether the constant of a check is printed or only known to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Explicit,
    Empirical,
}

/// Both sides of one inequality on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub id: String,
    pub tier: Tier,
    pub lhs: f64,
    pub rhs: f64,
    /// The multiplicative constant used (explicit tier) if there is one.
    pub constant: Option<f64>,
    pub ratio: f64,
    pub pass: bool,
    pub components: BTreeMap<String, f64>,
    pub fingerprint: String,
}

impl EstimateReport {
    /// Hard check `lhs <= rhs + 1e-9·scale`.
    pub fn explicit(id: impl Into<String>, lhs: f64, rhs: f64, constant: Option<f64>) -> Self {
        let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
        let pass = lhs.is_finite() && rhs.is_finite() && lhs <= rhs + EXPLICIT_TOL * scale;
        Self {
            id: id.into(),
            tier: Tier::Explicit,
            lhs,
            rhs,
            constant,
            ratio: ratio(lhs, rhs),
            pass,
            components: BTreeMap::new(),
            fingerprint: String::new(),
        }
    }

    /// Bounded-ratio report: passes when the ratio is finite.
    pub fn empirical(id: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let r = ratio(lhs, rhs);
        Self {
            id: id.into(),
            tier: Tier::Empirical,
            lhs,
            rhs,
            constant: None,
            ratio: r,
            pass: r.is_finite() && lhs.is_finite() && rhs.is_finite(),
            components: BTreeMap::new(),
            fingerprint: String::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.components.insert(name.to_string(), value);
        self
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = fingerprint.into();
        self
    }

    /// Adds a further hard condition to the pass flag.
    pub fn require(mut self, ok: bool) -> Self {
        self.pass &= ok;
        self
    }
}

/// `lhs/rhs`, with the vacuous case `0/0` reported as 0.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        if lhs.abs() < 1e-300 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuous_and_explicit() {
        let r = EstimateReport::explicit("zero", 0.0, 0.0, Some(3.0));
        assert!(r.pass);
        assert_eq!(r.ratio, 0.0);
        assert!(!EstimateReport::explicit("bad", 2.0, 1.0, None).pass);
        assert!(EstimateReport::explicit("edge", 1.0 + 1e-12, 1.0, None).pass);
        assert!(!EstimateReport::empirical("inf", 1.0, 0.0).pass);
    }
}
