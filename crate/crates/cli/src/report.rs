//! Run reports and artifact serialization.
//!
//! JSON artifacts serialize structs with a fixed field order and carry a
//! schema_version; CSV artifacts have fixed headers and print doubles
//! with 17 significant digits so they round-trip exactly. Reports contain
//! no timestamps unless timing capture is requested, so a rerun with the
//! same config and seed is byte-identical for any worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use fbs_core::check::{Check, Suite};
use fbs_core::gaussian::FieldSample;
use fbs_core::local_time::LocalTimeField;
use serde::Serialize;

use crate::config::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// One verification verdict as serialized in every report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub law: String,
    pub inputs: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub asserted: bool,
    pub verdict: String,
}

impl CheckRecord {
    /// One-line human rendering, matching the core check format.
    pub fn line(&self) -> String {
        format!(
            "{:<6} {:<34} lhs {: >13.6e}  rhs {: >13.6e}  slack {: >10.3e}  [{}]",
            self.verdict, self.check_id, self.lhs, self.rhs, self.slack, self.law
        )
    }
}

impl From<&Check> for CheckRecord {
    fn from(c: &Check) -> Self {
        CheckRecord {
            check_id: c.check_id.clone(),
            law: c.law.clone(),
            inputs: c.inputs.clone(),
            lhs: c.lhs,
            rhs: c.rhs,
            slack: c.slack,
            tolerance: c.tolerance,
            asserted: c.asserted,
            verdict: c.verdict().to_string(),
        }
    }
}

/// One fitted exponent with its regression error.
#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub name: String,
    pub exponent: f64,
    pub stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<f64>,
    pub note: String,
}

/// One fitted or computed constant.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantRecord {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub package: String,
    pub schema_version: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            package: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SCHEMA_VERSION,
        }
    }
}

/// Full scenario report: config echo, verdicts, fits, constants, files.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub checks: Vec<CheckRecord>,
    pub fits: Vec<FitRecord>,
    pub constants: Vec<ConstantRecord>,
    pub files: Vec<String>,
    pub n_checks: usize,
    pub n_failed: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
    pub versions: Versions,
}

impl RunReport {
    pub fn new(scenario: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            seed,
            config,
            checks: Vec::new(),
            fits: Vec::new(),
            constants: Vec::new(),
            files: Vec::new(),
            n_checks: 0,
            n_failed: 0,
            passed: true,
            wall_clock_seconds: None,
            versions: Versions::default(),
        }
    }

    pub fn absorb_checks<'a>(&mut self, checks: impl IntoIterator<Item = &'a Check>) {
        for c in checks {
            self.checks.push(CheckRecord::from(c));
        }
        self.seal();
    }

    pub fn absorb_suite(&mut self, suite: &Suite) {
        self.absorb_checks(&suite.checks);
    }

    /// Recompute the failure tally from the stored verdicts.
    pub fn seal(&mut self) {
        self.n_checks = self.checks.len();
        self.n_failed = self
            .checks
            .iter()
            .filter(|c| c.asserted && c.verdict == "FAIL")
            .count();
        self.passed = self.n_failed == 0;
    }
}

/// 17 significant digits: exact round-trip for f64.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> CliResult<std::fs::File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::File::create(path)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
}

/// Serialize one value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Failure(format!("serialization failed: {e}")))?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn to_json_string<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Failure(format!("serialization failed: {e}")))
}

/// Columns t_1..t_N,value_1..value_d; one row per grid point.
pub fn write_field_sample_csv(path: &Path, sample: &FieldSample) -> CliResult<()> {
    let mut f = create(path)?;
    let n_axes = sample.grid.n_axes();
    let d = sample.n_channels();
    let mut header: Vec<String> = (1..=n_axes).map(|l| format!("t_{l}")).collect();
    header.extend((1..=d).map(|c| format!("value_{c}")));
    writeln!(f, "{}", header.join(","))?;
    for i in 0..sample.grid.n_points() {
        let mut row: Vec<String> = sample.grid.point(i).iter().map(|&v| fmt_full(v)).collect();
        row.extend((0..d).map(|c| fmt_full(sample.value(c, i))));
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns x_1..x_d,mass,density; one row per occupied bin.
pub fn write_local_time_csv(path: &Path, ltf: &LocalTimeField) -> CliResult<()> {
    let mut f = create(path)?;
    let d = ltf.n_channels();
    let mut header: Vec<String> = (1..=d).map(|c| format!("x_{c}")).collect();
    header.push("mass".into());
    header.push("density".into());
    writeln!(f, "{}", header.join(","))?;
    for flat in 0..ltf.n_bins_total() {
        let mut row: Vec<String> = ltf.bin_center(flat).iter().map(|&v| fmt_full(v)).collect();
        row.push(fmt_full(ltf.masses[flat]));
        row.push(fmt_full(ltf.density(flat)));
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns width,value; one row per refinement shell.
pub fn write_shells_csv(path: &Path, widths: &[f64], values: &[f64]) -> CliResult<()> {
    let mut f = create(path)?;
    writeln!(f, "width,value")?;
    for (w, v) in widths.iter().zip(values) {
        writeln!(f, "{},{}", fmt_full(*w), fmt_full(*v))?;
    }
    Ok(())
}

/// Reads fit input: header `r,value` or `r,value,weight`.
pub fn read_pairs_csv(path: &Path) -> CliResult<(Vec<(f64, f64)>, Option<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Usage(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_weights = match cols.as_slice() {
        ["r", "value"] => false,
        ["r", "value", "weight"] => true,
        _ => {
            return Err(CliError::Usage(format!(
                "{}: header must be `r,value` or `r,value,weight`, got `{header}`",
                path.display()
            )))
        }
    };
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let want = if with_weights { 3 } else { 2 };
        if fields.len() != want {
            return Err(CliError::Usage(format!(
                "{} line {}: expected {want} fields",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> CliResult<f64> {
            s.parse::<f64>().map_err(|_| {
                CliError::Usage(format!(
                    "{} line {}: `{s}` is not a number",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        pairs.push((parse(fields[0])?, parse(fields[1])?));
        if with_weights {
            weights.push(parse(fields[2])?);
        }
    }
    Ok((pairs, if with_weights { Some(weights) } else { None }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_full_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2f64.sqrt(), 1e-300, -7.25e17] {
            let s = fmt_full(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn pairs_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        std::fs::write(&path, "r,value\n5.0e-1,2.5e-1\n2.5e-1,6.25e-2\n1.25e-1,1.5625e-2\n")
            .unwrap();
        let (pairs, w) = read_pairs_csv(&path).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(w.is_none());
        assert_eq!(pairs[0], (0.5, 0.25));
        std::fs::write(&path, "r,value,weight\n1,2,3\n").unwrap();
        let (pairs, w) = read_pairs_csv(&path).unwrap();
        assert_eq!(pairs, vec![(1.0, 2.0)]);
        assert_eq!(w.unwrap(), vec![3.0]);
        std::fs::write(&path, "radius,val\n1,2\n").unwrap();
        assert!(read_pairs_csv(&path).is_err());
    }

    #[test]
    fn report_seal_counts_only_asserted_failures() {
        let mut rep = RunReport::new("t", 1, BTreeMap::new());
        rep.checks.push(CheckRecord {
            check_id: "a".into(),
            law: "l".into(),
            inputs: String::new(),
            lhs: 1.0,
            rhs: 1.0,
            slack: -1.0,
            tolerance: 0.0,
            asserted: false,
            verdict: "report".into(),
        });
        rep.checks.push(CheckRecord {
            check_id: "b".into(),
            law: "l".into(),
            inputs: String::new(),
            lhs: 1.0,
            rhs: 2.0,
            slack: -1.0,
            tolerance: 0.0,
            asserted: true,
            verdict: "FAIL".into(),
        });
        rep.seal();
        assert_eq!(rep.n_failed, 1);
        assert!(!rep.passed);
    }
}
