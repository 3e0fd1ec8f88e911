//! Flat dotted-key configuration files and the experiment configuration.
//!
//! A config file is line-oriented text: `section.key = value`, `#` starts
//! a comment, blank lines are ignored. Values are scalars or comma lists.
//! Parsing is strict: unknown keys, duplicate keys, and malformed values
//! are errors naming the offending field path, and every derived quantity
//! (auto bin width, default domain) is resolved here before any
//! computation starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use fbs_core::hurst::{HurstVector, Rect};
use fbs_core::verifier::VerifyPlan;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, or a missing required input. Exit 2.
    Usage(String),
    /// A computation or artifact write failed. Exit 1.
    Failure(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<fbs_core::error::Error> for CliError {
    fn from(e: fbs_core::error::Error) -> Self {
        match e {
            fbs_core::error::Error::InvalidParameter { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(path: &str, reason: impl fmt::Display) -> CliError {
    CliError::Usage(format!("config error at {path}: {reason}"))
}

/// Parsed key-value entries before typing.
struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config error at line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(usage(&format!("line {}", lineno + 1), "empty key"));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(usage(&key, "duplicate key"));
            }
        }
        Ok(RawConfig { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }
}

fn parse_f64(path: &str, v: &str) -> CliResult<f64> {
    let x: f64 = v.parse().map_err(|_| usage(path, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(usage(path, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(path: &str, v: &str) -> CliResult<usize> {
    v.parse().map_err(|_| usage(path, format!("`{v}` is not a nonnegative integer")))
}

fn parse_u64(path: &str, v: &str) -> CliResult<u64> {
    v.parse().map_err(|_| usage(path, format!("`{v}` is not an unsigned integer")))
}

fn parse_f64_list(path: &str, v: &str) -> CliResult<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(path, s.trim()))
        .collect()
}

fn parse_usize_list(path: &str, v: &str) -> CliResult<Vec<usize>> {
    v.split(',')
        .map(|s| parse_usize(path, s.trim()))
        .collect()
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Tolerances consumed by the run pipeline.
#[derive(Debug, Clone)]
pub struct ToleranceBlock {
    pub conservation_rel: f64,
    pub identity_rel: f64,
    pub moment_gate_se: f64,
    pub moment_allowance: f64,
    pub fit_slope: f64,
}

impl Default for ToleranceBlock {
    fn default() -> Self {
        ToleranceBlock {
            conservation_rel: 1e-12,
            identity_rel: 1e-6,
            moment_gate_se: 5.0,
            moment_allowance: 0.01,
            fit_slope: 0.15,
        }
    }
}

/// One experiment: field law, domain, estimator resolution, replica and
/// seed plan, fit ladder, tolerances, and output location.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub h: Vec<f64>,
    pub ambient_dim: usize,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    /// Grid intervals per axis.
    pub resolution: Vec<usize>,
    pub bin_width: f64,
    pub bin_width_auto: bool,
    /// Spatial level x in R^d at which local time is read.
    pub level: Vec<f64>,
    pub replicas: usize,
    pub master_seed: u64,
    pub radii: Vec<f64>,
    pub fit_replicas: usize,
    pub moments_n_max: usize,
    pub moments_shells: usize,
    pub moments_w0: f64,
    pub out_dir: PathBuf,
    pub out_samples: usize,
    pub tol: ToleranceBlock,
    pub plan: VerifyPlan,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> CliResult<Self> {
        let mut raw = RawConfig::parse(text)?;
        let h = match raw.take("field.h") {
            Some(v) => parse_f64_list("field.h", &v)?,
            None => return Err(usage("field.h", "missing required key")),
        };
        let n = h.len();
        let ambient_dim = match raw.take("field.d") {
            Some(v) => parse_usize("field.d", &v)?,
            None => 1,
        };
        let hurst = HurstVector::new(h.clone(), ambient_dim.max(1))
            .map_err(|e| usage("field.h", e))?;
        if ambient_dim == 0 {
            return Err(usage("field.d", "must be at least 1"));
        }
        let domain_lo = match raw.take("domain.lo") {
            Some(v) => parse_f64_list("domain.lo", &v)?,
            None => vec![1.0; n],
        };
        let domain_hi = match raw.take("domain.hi") {
            Some(v) => parse_f64_list("domain.hi", &v)?,
            None => vec![2.0; n],
        };
        if domain_lo.len() != n || domain_hi.len() != n {
            return Err(usage("domain.lo", "length must match field.h"));
        }
        if domain_lo.iter().any(|&x| !(x > 0.0)) {
            return Err(usage("domain.lo", "the domain must lie in the open positive orthant"));
        }
        if domain_lo.iter().zip(&domain_hi).any(|(lo, hi)| !(hi > lo)) {
            return Err(usage("domain.hi", "each upper edge must exceed its lower edge"));
        }
        let resolution = match raw.take("grid.resolution") {
            Some(v) => {
                let r = parse_usize_list("grid.resolution", &v)?;
                match r.len() {
                    1 => vec![r[0]; n],
                    len if len == n => r,
                    _ => return Err(usage("grid.resolution", "give one value or one per axis")),
                }
            }
            None => vec![32; n],
        };
        if resolution.iter().any(|&m| m < 2) {
            return Err(usage("grid.resolution", "need at least 2 intervals per axis"));
        }
        let level = match raw.take("localtime.level") {
            Some(v) => parse_f64_list("localtime.level", &v)?,
            None => vec![0.0; ambient_dim],
        };
        if level.len() != ambient_dim {
            return Err(usage("localtime.level", "length must match field.d"));
        }
        // Resolution coupling: the largest per-step field increment scale
        // dt^{H_min} must not exceed a quarter bin.
        let dt_max = domain_lo
            .iter()
            .zip(&domain_hi)
            .zip(&resolution)
            .map(|((lo, hi), m)| (hi - lo) / *m as f64)
            .fold(0.0f64, f64::max);
        let increment_scale = dt_max.powf(hurst.min());
        let (bin_width, bin_width_auto) = match raw.take("localtime.bin_width") {
            None => (4.0 * increment_scale, true),
            Some(v) if v == "auto" => (4.0 * increment_scale, true),
            Some(v) => {
                let w = parse_f64("localtime.bin_width", &v)?;
                if !(w > 0.0) {
                    return Err(usage("localtime.bin_width", "must be positive"));
                }
                if increment_scale > w / 4.0 {
                    return Err(usage(
                        "localtime.bin_width",
                        format!(
                            "resolution coupling violated: dt^Hmin = {increment_scale:.6} exceeds bin_width/4 = {:.6}; refine the grid or widen the bins",
                            w / 4.0
                        ),
                    ));
                }
                (w, false)
            }
        };
        let replicas = match raw.take("run.replicas") {
            Some(v) => parse_usize("run.replicas", &v)?,
            None => 100,
        };
        if replicas == 0 {
            return Err(usage("run.replicas", "must be at least 1"));
        }
        let master_seed = match raw.take("run.master_seed") {
            Some(v) => parse_u64("run.master_seed", &v)?,
            None => 4021,
        };
        let radii = match raw.take("fit.radii") {
            Some(v) => parse_f64_list("fit.radii", &v)?,
            None => vec![0.32, 0.16, 0.08, 0.04],
        };
        if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[0] <= w[1]) {
            return Err(usage("fit.radii", "must be positive and strictly decreasing"));
        }
        let fit_replicas = match raw.take("fit.replicas") {
            Some(v) => parse_usize("fit.replicas", &v)?,
            None => 100,
        };
        let moments_n_max = match raw.take("moments.n_max") {
            Some(v) => parse_usize("moments.n_max", &v)?,
            None => 1,
        };
        if moments_n_max == 0 || moments_n_max > 3 {
            return Err(usage("moments.n_max", "must lie in 1..=3"));
        }
        let moments_shells = match raw.take("moments.shells") {
            Some(v) => parse_usize("moments.shells", &v)?,
            None => 0,
        };
        if moments_shells > 60 {
            return Err(usage("moments.shells", "at most 60 shells"));
        }
        let moments_w0 = match raw.take("moments.w0") {
            Some(v) => parse_f64("moments.w0", &v)?,
            None => 0.25,
        };
        let min_side = domain_lo
            .iter()
            .zip(&domain_hi)
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min);
        if !(moments_w0 > 0.0 && moments_w0 < min_side) {
            return Err(usage("moments.w0", "must lie in (0, shortest domain side)"));
        }
        let out_dir = PathBuf::from(match raw.take("out.dir") {
            Some(v) => v,
            None => "out".to_string(),
        });
        let out_samples = match raw.take("out.samples") {
            Some(v) => parse_usize("out.samples", &v)?,
            None => 4,
        };
        let mut tol = ToleranceBlock::default();
        if let Some(v) = raw.take("tolerance.conservation_rel") {
            tol.conservation_rel = parse_f64("tolerance.conservation_rel", &v)?;
        }
        if let Some(v) = raw.take("tolerance.identity_rel") {
            tol.identity_rel = parse_f64("tolerance.identity_rel", &v)?;
        }
        if let Some(v) = raw.take("tolerance.moment_gate_se") {
            tol.moment_gate_se = parse_f64("tolerance.moment_gate_se", &v)?;
        }
        if let Some(v) = raw.take("tolerance.moment_allowance") {
            tol.moment_allowance = parse_f64("tolerance.moment_allowance", &v)?;
        }
        if let Some(v) = raw.take("tolerance.fit_slope") {
            tol.fit_slope = parse_f64("tolerance.fit_slope", &v)?;
        }
        if tol.conservation_rel <= 0.0
            || tol.identity_rel <= 0.0
            || tol.moment_gate_se <= 0.0
            || tol.moment_allowance < 0.0
            || tol.fit_slope <= 0.0
        {
            return Err(usage("tolerance", "tolerances must be positive"));
        }
        let mut plan = VerifyPlan {
            master_seed,
            ..VerifyPlan::default()
        };
        if let Some(v) = raw.take("verify.det_configs") {
            plan.det_configs = parse_usize("verify.det_configs", &v)?;
        }
        if let Some(v) = raw.take("verify.selfsim_configs") {
            plan.selfsim_configs = parse_usize("verify.selfsim_configs", &v)?;
        }
        if let Some(v) = raw.take("verify.additivity_configs") {
            plan.additivity_configs = parse_usize("verify.additivity_configs", &v)?;
        }
        if let Some(v) = raw.take("verify.ineq_configs") {
            plan.ineq_configs = parse_usize("verify.ineq_configs", &v)?;
        }
        if let Some(v) = raw.take("verify.holder_configs") {
            plan.holder_configs = parse_usize("verify.holder_configs", &v)?;
        }
        if let Some(v) = raw.take("verify.sectorial_configs") {
            plan.sectorial_configs = parse_usize("verify.sectorial_configs", &v)?;
        }
        if let Some(v) = raw.take("verify.weight_configs") {
            plan.weight_configs = parse_usize("verify.weight_configs", &v)?;
        }
        let scenario = raw.take("scenario.id").unwrap_or_default();
        if let Some((key, _)) = raw.entries.iter().next() {
            return Err(usage(key, "unknown key"));
        }
        Ok(ExperimentConfig {
            scenario,
            h,
            ambient_dim,
            domain_lo,
            domain_hi,
            resolution,
            bin_width,
            bin_width_auto,
            level,
            replicas,
            master_seed,
            radii,
            fit_replicas,
            moments_n_max,
            moments_shells,
            moments_w0,
            out_dir,
            out_samples,
            tol,
            plan,
        })
    }

    pub fn hurst(&self) -> CliResult<HurstVector> {
        Ok(HurstVector::new(self.h.clone(), self.ambient_dim)?)
    }

    pub fn t_box(&self) -> CliResult<Rect> {
        Ok(Rect::new(self.domain_lo.clone(), self.domain_hi.clone())?)
    }

    /// Grid coordinates per axis: resolution[l] intervals over the domain.
    pub fn grid_axes(&self) -> Vec<Vec<f64>> {
        self.domain_lo
            .iter()
            .zip(&self.domain_hi)
            .zip(&self.resolution)
            .map(|((lo, hi), m)| {
                (0..=*m)
                    .map(|j| lo + (hi - lo) * j as f64 / *m as f64)
                    .collect()
            })
            .collect()
    }

    /// Local-time scenarios need the existence condition d < sum 1/H_l.
    pub fn ensure_local_time_admissible(&self) -> CliResult<()> {
        let inv_sum: f64 = self.h.iter().map(|h| 1.0 / h).sum();
        if (self.ambient_dim as f64) < inv_sum {
            Ok(())
        } else {
            Err(usage(
                "field.d",
                format!(
                    "local time needs d < sum 1/H_l; got d = {} with sum 1/H_l = {inv_sum:.6}",
                    self.ambient_dim
                ),
            ))
        }
    }

    /// Resolved key-value echo, defaults and derived values included.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("scenario.id".into(), self.scenario.clone());
        m.insert("field.h".into(), join(&self.h));
        m.insert("field.d".into(), self.ambient_dim.to_string());
        m.insert("domain.lo".into(), join(&self.domain_lo));
        m.insert("domain.hi".into(), join(&self.domain_hi));
        m.insert("grid.resolution".into(), join(&self.resolution));
        m.insert("localtime.bin_width".into(), self.bin_width.to_string());
        m.insert(
            "localtime.bin_width_mode".into(),
            if self.bin_width_auto { "auto" } else { "explicit" }.into(),
        );
        m.insert("localtime.level".into(), join(&self.level));
        m.insert("run.replicas".into(), self.replicas.to_string());
        m.insert("run.master_seed".into(), self.master_seed.to_string());
        m.insert("fit.radii".into(), join(&self.radii));
        m.insert("fit.replicas".into(), self.fit_replicas.to_string());
        m.insert("moments.n_max".into(), self.moments_n_max.to_string());
        m.insert("moments.shells".into(), self.moments_shells.to_string());
        m.insert("moments.w0".into(), self.moments_w0.to_string());
        m.insert("out.dir".into(), self.out_dir.display().to_string());
        m.insert("out.samples".into(), self.out_samples.to_string());
        m.insert(
            "tolerance.conservation_rel".into(),
            self.tol.conservation_rel.to_string(),
        );
        m.insert("tolerance.identity_rel".into(), self.tol.identity_rel.to_string());
        m.insert(
            "tolerance.moment_gate_se".into(),
            self.tol.moment_gate_se.to_string(),
        );
        m.insert(
            "tolerance.moment_allowance".into(),
            self.tol.moment_allowance.to_string(),
        );
        m.insert("tolerance.fit_slope".into(), self.tol.fit_slope.to_string());
        m.insert("verify.det_configs".into(), self.plan.det_configs.to_string());
        m.insert(
            "verify.selfsim_configs".into(),
            self.plan.selfsim_configs.to_string(),
        );
        m.insert(
            "verify.additivity_configs".into(),
            self.plan.additivity_configs.to_string(),
        );
        m.insert("verify.ineq_configs".into(), self.plan.ineq_configs.to_string());
        m.insert(
            "verify.holder_configs".into(),
            self.plan.holder_configs.to_string(),
        );
        m.insert(
            "verify.sectorial_configs".into(),
            self.plan.sectorial_configs.to_string(),
        );
        m.insert(
            "verify.weight_configs".into(),
            self.plan.weight_configs.to_string(),
        );
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "field.h = 0.5,0.5\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_text(MINIMAL).unwrap();
        assert_eq!(cfg.h.len(), 2);
        assert_eq!(cfg.ambient_dim, 1);
        assert_eq!(cfg.domain_lo, vec![1.0, 1.0]);
        assert_eq!(cfg.resolution, vec![32, 32]);
        assert!(cfg.bin_width_auto);
        // dt = 1/32, auto width = 4 dt^{1/2}.
        assert!((cfg.bin_width - 4.0 * (1.0f64 / 32.0).sqrt()).abs() < 1e-15);
        assert_eq!(cfg.level, vec![0.0]);
    }

    #[test]
    fn comments_blank_lines_and_lists_parse() {
        let text = "# comment\n\nfield.h = 0.4, 0.6\nfield.d = 1\ngrid.resolution = 16,24\nfit.radii = 0.4,0.2,0.1  # trailing comment\n";
        let cfg = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(cfg.resolution, vec![16, 24]);
        assert_eq!(cfg.radii, vec![0.4, 0.2, 0.1]);
    }

    #[test]
    fn errors_name_the_field_path() {
        let e = ExperimentConfig::from_text("field.h = 0.5\nfield.d = x\n").unwrap_err();
        assert!(e.to_string().contains("field.d"), "{e}");
        let e = ExperimentConfig::from_text("field.h = 1.5\n").unwrap_err();
        assert!(e.to_string().contains("field.h"), "{e}");
        let e = ExperimentConfig::from_text("field.h = 0.5\nnot.a.key = 1\n").unwrap_err();
        assert!(e.to_string().contains("not.a.key"), "{e}");
        let e = ExperimentConfig::from_text("").unwrap_err();
        assert!(e.to_string().contains("field.h"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn domain_must_be_positive_orthant() {
        let e = ExperimentConfig::from_text("field.h = 0.5\ndomain.lo = 0\ndomain.hi = 1\n")
            .unwrap_err();
        assert!(e.to_string().contains("domain.lo"), "{e}");
    }

    #[test]
    fn explicit_bin_width_enforces_resolution_coupling() {
        // dt = 1/32, dt^0.5 = 0.1768 > 0.4/4: rejected.
        let e = ExperimentConfig::from_text("field.h = 0.5\nlocaltime.bin_width = 0.4\n")
            .unwrap_err();
        assert!(e.to_string().contains("localtime.bin_width"), "{e}");
        // A finer grid satisfies the same width.
        let cfg = ExperimentConfig::from_text(
            "field.h = 0.5\ngrid.resolution = 256\nlocaltime.bin_width = 0.4\n",
        )
        .unwrap();
        assert!(!cfg.bin_width_auto);
        assert_eq!(cfg.bin_width, 0.4);
    }

    #[test]
    fn local_time_admissibility_gate() {
        let cfg = ExperimentConfig::from_text("field.h = 0.6\nfield.d = 2\n").unwrap();
        assert!(cfg.ensure_local_time_admissible().is_err());
        let cfg = ExperimentConfig::from_text("field.h = 0.6\nfield.d = 1\n").unwrap();
        assert!(cfg.ensure_local_time_admissible().is_ok());
    }

    #[test]
    fn echo_is_complete_and_deterministic() {
        let cfg = ExperimentConfig::from_text(MINIMAL).unwrap();
        let a = cfg.echo();
        let b = cfg.echo();
        assert_eq!(a, b);
        assert!(a.contains_key("localtime.bin_width"));
        assert!(a.contains_key("verify.ineq_configs"));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let e = ExperimentConfig::from_text("field.h = 0.5\nfield.h = 0.6\n").unwrap_err();
        assert!(e.to_string().contains("duplicate"), "{e}");
    }
}
