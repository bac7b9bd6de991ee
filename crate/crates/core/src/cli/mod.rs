//! Command-line pipelines. Each run yields a JSON report (and optional CSV
//! files) plus an exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | every check passed and every solve converged |
//! | 1 | a hypothesis, uniqueness or consistency check failed |
//! | 2 | numerical failure (divergence, non-finite values, no convergence) |
//! | 3 | invalid input |

mod config;
mod pipelines;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

pub use config::{
    parse_config, BieleckiCheckParams, CertifyParams, Command, ConfigError, DerivativeSpec, EtaSpec, ExampleParams,
    ForcingSpec, KChoice, KernelSpec, MapSpec, Overrides, Parameters, RunConfig, ScalarFunction, SolveParams,
    StartSpec, VolterraParams,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

/// Result of one run. `report` never contains the timestamp; it is added
/// by [`Outcome::report_with_timestamp`].
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Value,
    /// `(file name, contents)` pairs.
    pub csv: Vec<(String, String)>,
}

impl Outcome {
    pub fn report_with_timestamp(&self) -> Value {
        let mut r = self.report.clone();
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        r["timestamp_unix"] = json!(secs);
        r
    }

    /// Writes `report.json` and the CSV files into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&self.report_with_timestamp()).expect("report serializes");
        std::fs::write(dir.join("report.json"), text + "\n")?;
        for (name, body) in &self.csv {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Pipeline output before it is wrapped into a report.
pub(crate) struct Finding {
    pub result: Value,
    pub diagnostics: Vec<String>,
    pub checks_passed: bool,
    pub csv: Vec<(String, String)>,
}

fn status(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_CHECK_FAILED => "check_failed",
        EXIT_NUMERICAL => "numerical_failure",
        _ => "invalid_input",
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Report for a configuration that could not be parsed.
pub fn invalid_config_outcome(command: Option<Command>, err: &ConfigError) -> Outcome {
    Outcome {
        exit_code: EXIT_INVALID,
        report: json!({
            "command": command.map(|c| c.to_string()),
            "exit_code": EXIT_INVALID,
            "status": status(EXIT_INVALID),
            "diagnostics": [err.to_string()],
            "config": Value::Null,
            "result": Value::Null,
        }),
        csv: Vec::new(),
    }
}

/// Executes the configured pipeline.
pub fn run(cfg: &RunConfig) -> Outcome {
    let found = match &cfg.parameters {
        Parameters::Certify(p) => pipelines::certify(p, cfg.seed),
        Parameters::Solve(p) => pipelines::solve(p, cfg.seed),
        Parameters::Volterra(p) => pipelines::volterra(p),
        Parameters::BieleckiCheck(p) => pipelines::bielecki_check(p, cfg.seed),
        Parameters::Example(_) => pipelines::example(cfg.seed),
    };
    let (exit_code, result, diagnostics, csv) = match found {
        Ok(f) => {
            let code = if f.checks_passed { EXIT_OK } else { EXIT_CHECK_FAILED };
            // pipelines flag numerical trouble through their diagnostics prefix
            let code = if f.diagnostics.iter().any(|d| d.starts_with("numerical:")) { EXIT_NUMERICAL } else { code };
            (code, f.result, f.diagnostics, f.csv)
        }
        Err(e) => (exit_code_for(&e), Value::Null, vec![e.to_string()], Vec::new()),
    };
    Outcome {
        exit_code,
        report: json!({
            "command": cfg.command.to_string(),
            "seed": cfg.seed,
            "exit_code": exit_code,
            "status": status(exit_code),
            "diagnostics": diagnostics,
            "config": cfg,
            "result": result,
        }),
        csv,
    }
}
