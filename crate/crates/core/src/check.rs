//! Pass/fail records shared by the verification suites and `report.json`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// `|lhs − rhs| ≤ tolerance`.
    pub fn close(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let gap = (lhs - rhs).abs();
        Self {
            check: name.into(),
            lhs,
            rhs,
            gap,
            tolerance,
            pass: gap <= tolerance && gap.is_finite(),
        }
    }

    /// `value ≤ tolerance`; the value itself is the gap.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            check: name.into(),
            lhs: value,
            rhs: 0.0,
            gap: value,
            tolerance,
            pass: value <= tolerance && value.is_finite(),
        }
    }

    /// `value ≥ bound`. The gap is the shortfall, zero when satisfied.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            check: name.into(),
            lhs: value,
            rhs: bound,
            gap: (bound - value).max(0.0),
            tolerance: 0.0,
            pass: value >= bound,
        }
    }

    /// A boolean outcome recorded as `lhs = 1` on success.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            check: name.into(),
            lhs: if ok { 1.0 } else { 0.0 },
            rhs: 1.0,
            gap: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            pass: ok,
        }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}
