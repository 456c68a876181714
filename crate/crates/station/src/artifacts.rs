//! Run directory output shared by headless and live runs.

use std::fs;
use std::path::Path;

use edgeform::scenario::{metrics, Metrics, RunLogs, ScenarioConfig, METRICS_FILE};
use edgeform::theory::{certify_logs, BoundReport, CertifyParams};

use crate::StationError;

pub struct RunArtifacts {
    pub metrics: Metrics,
    pub report: BoundReport,
}

/// Writes logs, config, metrics and the bound report into `dir`.
pub fn write_run(dir: &Path, config: &ScenarioConfig, logs: &RunLogs) -> Result<RunArtifacts, StationError> {
    logs.write_dir(dir, config)?;
    let m = metrics(logs);
    fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(&m)?)?;
    let report = certify_logs(config, logs, &CertifyParams::default())?;
    report.write(dir)?;
    Ok(RunArtifacts { metrics: m, report })
}
