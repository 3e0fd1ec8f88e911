//! Pass/fail records for numerical law checks and their aggregation.
//!
//! A check compares two numbers under a named law with an explicit
//! tolerance and records the margin left before the verdict would flip.
//! Asserted checks gate a run; report-only checks never do, because
//! almost-sure and asymptotic statements cannot honestly fail a finite
//! experiment and are recorded as evidence instead.

use serde::Serialize;

/// One numerical verdict against a named law.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    /// Stable machine id, unique within a suite.
    pub check_id: String,
    /// The mathematical statement being exercised, self-contained.
    pub law: String,
    /// Input summary sufficient to reproduce the numbers.
    pub inputs: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Margin left before failure; negative means the check failed.
    pub slack: f64,
    pub tolerance: f64,
    /// Asserted checks gate the run; report-only checks never do.
    pub asserted: bool,
    pub passed: bool,
}

impl Check {
    /// |lhs - rhs| <= tol, measured relative to max(|lhs|, |rhs|, 1).
    pub fn relative(check_id: &str, law: &str, inputs: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        let diff = (lhs - rhs).abs() / scale;
        let slack = tol - diff;
        Check {
            check_id: check_id.to_string(),
            law: law.to_string(),
            inputs: inputs.to_string(),
            lhs,
            rhs,
            slack,
            tolerance: tol,
            asserted: true,
            passed: diff.is_finite() && slack >= 0.0,
        }
    }

    /// lhs <= rhs + tol in the caller's absolute units.
    pub fn upper(check_id: &str, law: &str, inputs: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs + tol - lhs;
        Check {
            check_id: check_id.to_string(),
            law: law.to_string(),
            inputs: inputs.to_string(),
            lhs,
            rhs,
            slack,
            tolerance: tol,
            asserted: true,
            passed: slack.is_finite() && slack >= 0.0,
        }
    }

    /// |lhs - rhs| <= tol in the caller's absolute units.
    pub fn absolute(check_id: &str, law: &str, inputs: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let diff = (lhs - rhs).abs();
        let slack = tol - diff;
        Check {
            check_id: check_id.to_string(),
            law: law.to_string(),
            inputs: inputs.to_string(),
            lhs,
            rhs,
            slack,
            tolerance: tol,
            asserted: true,
            passed: diff.is_finite() && slack >= 0.0,
        }
    }

    /// Marks the check as evidence that cannot fail the run.
    pub fn report_only(mut self) -> Self {
        self.asserted = false;
        self
    }

    pub fn verdict(&self) -> &'static str {
        match (self.asserted, self.passed) {
            (false, _) => "report",
            (true, true) => "pass",
            (true, false) => "FAIL",
        }
    }

    /// One-line human rendering.
    pub fn line(&self) -> String {
        format!(
            "{:<6} {:<34} lhs {: >13.6e}  rhs {: >13.6e}  slack {: >10.3e}  [{}]",
            self.verdict(),
            self.check_id,
            self.lhs,
            self.rhs,
            self.slack,
            self.law
        )
    }
}

/// A named collection of checks; fails exactly when an asserted check does.
#[derive(Debug, Clone, Serialize)]
pub struct Suite {
    pub name: String,
    pub checks: Vec<Check>,
}

impl Suite {
    pub fn new(name: &str) -> Self {
        Suite {
            name: name.to_string(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Suite) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.asserted || c.passed)
    }

    pub fn n_failed(&self) -> usize {
        self.checks.iter().filter(|c| c.asserted && !c.passed).count()
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.asserted && !c.passed)
            .collect()
    }

    /// Human-readable block: one line per check plus a trailer.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("suite {}\n", self.name));
        for c in &self.checks {
            out.push_str(&c.line());
            out.push('\n');
        }
        out.push_str(&format!(
            "suite {}: {} checks, {} failed\n",
            self.name,
            self.checks.len(),
            self.n_failed()
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_check_scales_and_passes() {
        let c = Check::relative("id", "law", "inp", 1.0e6, 1.0e6 + 0.5, 1e-6);
        assert!(c.passed);
        assert!(c.slack > 0.0);
        let c = Check::relative("id", "law", "inp", 1.0, 1.2, 1e-6);
        assert!(!c.passed);
        assert!(c.slack < 0.0);
    }

    #[test]
    fn upper_check_direction() {
        assert!(Check::upper("id", "law", "inp", 1.0, 2.0, 0.0).passed);
        assert!(!Check::upper("id", "law", "inp", 2.0, 1.0, 0.5).passed);
        assert!(Check::upper("id", "law", "inp", 2.0, 1.0, 1.5).passed);
    }

    #[test]
    fn non_finite_comparisons_fail() {
        assert!(!Check::relative("id", "law", "inp", f64::NAN, 1.0, 1e-6).passed);
        assert!(!Check::upper("id", "law", "inp", f64::INFINITY, 1.0, 1e-6).passed);
        assert!(!Check::absolute("id", "law", "inp", 1.0, f64::NAN, 1e-6).passed);
    }

    #[test]
    fn suite_gates_on_asserted_only() {
        let mut s = Suite::new("demo");
        s.push(Check::absolute("ok", "law", "", 1.0, 1.0, 0.0));
        s.push(Check::absolute("bad", "law", "", 1.0, 2.0, 0.0).report_only());
        assert!(s.passed());
        assert_eq!(s.n_failed(), 0);
        s.push(Check::absolute("worse", "law", "", 1.0, 2.0, 0.0));
        assert!(!s.passed());
        assert_eq!(s.n_failed(), 1);
        assert_eq!(s.failures()[0].check_id, "worse");
        assert!(s.render().contains("FAIL"));
    }
}
