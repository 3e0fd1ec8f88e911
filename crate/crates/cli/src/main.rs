//! `fbs`: simulation and verification harness for fractional Brownian
//! sheets and their local times.
//!
//! Subcommands either measure (simulate, localtime, exponents, moments,
//! fit) or gate (verify, run). Gating commands exit 1 when an asserted
//! check fails; usage and configuration problems exit 2. All artifacts
//! carry a schema_version, and a rerun with the same resolved config and
//! seed is byte-identical for any worker count unless --timings is given.

mod config;
mod pipeline;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CliError, CliResult, ExperimentConfig};
use fbs_core::verifier::VerifyPlan;

#[derive(Parser)]
#[command(
    name = "fbs",
    version,
    about = "Fractional Brownian sheet laboratory: exact sampling, local times, exponent fits, analytic verification"
)]
struct Cli {
    /// Experiment configuration file (flat dotted keys).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the master seed from the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory (beats FBS_OUT_DIR, which beats the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the replica count from the config.
    #[arg(long, global = true, value_name = "N")]
    replicas: Option<usize>,

    /// Machine-readable JSON on stdout instead of text lines.
    #[arg(long, global = true)]
    json: bool,

    /// Include wall-clock timing in reports (breaks byte-identity).
    #[arg(long, global = true)]
    timings: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample sheet fields on the configured grid and emit them as CSV.
    Simulate,
    /// Estimate local-time fields from fresh samples and emit CSV+JSON.
    Localtime,
    /// Print the exponent profile and Holder weights for a Hurst vector.
    Exponents {
        /// Comma-separated Hurst indices, e.g. 0.4,0.6.
        #[arg(long = "H", value_name = "LIST")]
        h: String,
        /// Spatial dimension of the field values.
        #[arg(long, value_name = "D", default_value_t = 1)]
        d: usize,
        /// Moment order (defaults to d).
        #[arg(long, value_name = "Q")]
        q: Option<f64>,
        /// Damping parameter in (0, delta_tau) (defaults to delta_tau/2).
        #[arg(long, value_name = "DELTA")]
        delta: Option<f64>,
    },
    /// Run analytic verification suites and report verdicts.
    Verify {
        /// One of: identities, inequalities, weights, divergence (default all).
        #[arg(long, value_name = "NAME")]
        suite: Option<String>,
        /// Reduced sweep sizes for smoke runs.
        #[arg(long)]
        quick: bool,
    },
    /// Exact and Monte Carlo local-time moments, plus the refinement probe.
    Moments,
    /// Fit a power law to (r, value) pairs from a CSV file.
    Fit {
        /// CSV with header `r,value` or `r,value,weight`.
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        /// Reference exponent to report the deviation against.
        #[arg(long, value_name = "SLOPE")]
        theory: Option<f64>,
    },
    /// Execute the full scenario pipeline and write a run report.
    Run,
}

/// --out beats FBS_OUT_DIR beats the config's out.dir beats ./out.
fn resolve_out(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    if let Ok(v) = std::env::var("FBS_OUT_DIR") {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    match cfg {
        Some(c) => c.out_dir.clone(),
        None => PathBuf::from("out"),
    }
}

/// An output directory only when one was named explicitly somewhere.
fn explicit_out(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Option<PathBuf> {
    if cli.out.is_some() || cfg.is_some() {
        return Some(resolve_out(cli, cfg));
    }
    match std::env::var("FBS_OUT_DIR") {
        Ok(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => None,
    }
}

fn require_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| {
        CliError::Usage(
            "missing --config PATH\nusage: fbs <subcommand> --config PATH [--seed U64] [--out DIR] [--replicas N] [--json]".into(),
        )
    })?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
        cfg.plan.master_seed = s;
    }
    if let Some(r) = cli.replicas {
        if r == 0 {
            return Err(CliError::Usage("--replicas must be at least 1".into()));
        }
        cfg.replicas = r;
    }
    Ok(cfg)
}

fn optional_config(cli: &Cli) -> CliResult<Option<ExperimentConfig>> {
    match &cli.config {
        Some(_) => Ok(Some(require_config(cli)?)),
        None => Ok(None),
    }
}

fn parse_h_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--H: `{t}` is not a number")))
        })
        .collect()
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.cmd {
        Cmd::Simulate => {
            let cfg = require_config(cli)?;
            let out = resolve_out(cli, Some(&cfg));
            pipeline::cmd_simulate(&cfg, &out, cli.replicas, cli.json)
        }
        Cmd::Localtime => {
            let cfg = require_config(cli)?;
            let out = resolve_out(cli, Some(&cfg));
            pipeline::cmd_localtime(&cfg, &out, cli.json)
        }
        Cmd::Exponents { h, d, q, delta } => {
            let h = parse_h_list(h)?;
            let out = explicit_out(cli, None);
            pipeline::cmd_exponents(&h, *d, *q, *delta, out.as_deref())
        }
        Cmd::Verify { suite, quick } => {
            let cfg = optional_config(cli)?;
            let mut plan = match &cfg {
                Some(c) => c.plan.clone(),
                None => VerifyPlan::default(),
            };
            if *quick {
                let seed = plan.master_seed;
                plan = VerifyPlan::quick();
                plan.master_seed = seed;
            }
            if let Some(s) = cli.seed {
                plan.master_seed = s;
            }
            let out = explicit_out(cli, cfg.as_ref());
            pipeline::cmd_verify(suite.as_deref(), &plan, out.as_deref(), cli.json)
        }
        Cmd::Moments => {
            let cfg = require_config(cli)?;
            let out = resolve_out(cli, Some(&cfg));
            pipeline::cmd_moments(&cfg, &out, cli.replicas, cli.json)
        }
        Cmd::Fit { input, theory } => {
            let out = explicit_out(cli, None);
            pipeline::cmd_fit(input, *theory, out.as_deref(), cli.json)
        }
        Cmd::Run => {
            let cfg = require_config(cli)?;
            let out = resolve_out(cli, Some(&cfg));
            let rep = pipeline::run(&cfg, &out, cli.timings)?;
            pipeline::print_run_report(&rep, cli.json)?;
            Ok(if rep.passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fbs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
