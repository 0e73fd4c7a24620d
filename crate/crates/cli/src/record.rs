use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiments;
use crate::output::Outputs;

pub const RECORD_FILE: &str = "run.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub code_version: &'static str,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    /// SHA-256 of each output file.
    pub outputs: BTreeMap<String, String>,
    pub summary: Value,
    pub check_passed: Option<bool>,
}

/// Runs a config into `dir`. On error every file written so far is removed.
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<RunRecord> {
    let validated = config.validate()?;
    let start = Instant::now();
    let mut out = Outputs::new(dir)?;
    let report = match experiments::run(&validated, &mut out) {
        Ok(r) => r,
        Err(e) => {
            out.discard();
            return Err(e);
        }
    };
    let outputs = match out.digests() {
        Ok(d) => d,
        Err(e) => {
            out.discard();
            return Err(e);
        }
    };
    let record = RunRecord {
        config: config.clone(),
        code_version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
        outputs,
        summary: report.summary,
        check_passed: report.check_passed,
    };
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    let path = out.dir().join(RECORD_FILE);
    std::fs::write(&path, json + "\n").map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })?;
    Ok(record)
}
