//! Run directory layout: `config.json`, `trajectory.csv`, `supervision.csv`,
//! `events.jsonl`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ScenarioConfig, ScenarioError};

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUPERVISION_FILE: &str = "supervision.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Drone,
    Target,
}

/// One node at one logged instant. `edge_err_norm` is the stacked `‖e‖` at that instant,
/// repeated on every row of the instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub node_id: usize,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub ref_x: Option<f64>,
    pub ref_y: Option<f64>,
    pub ref_z: Option<f64>,
    pub edge_err_norm: f64,
}

/// One supervision instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionRow {
    pub k: usize,
    pub t: f64,
    pub mode: String,
    pub command_applied: bool,
    pub consistent: Option<bool>,
    pub reason: String,
    pub backend: String,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub w_bar: Option<f64>,
    pub e_minus: f64,
    pub e_plus: f64,
    pub jump_norm: f64,
    pub identity_residual: f64,
    pub reinitialized: bool,
    pub edges_before: usize,
    pub edges_after: usize,
    /// Drones with no incident edge at this instant.
    pub isolated: usize,
    /// Edge list after the jump, `i-j` pairs separated by spaces.
    pub edges: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLogs {
    pub trajectory: Vec<TrajectoryRow>,
    pub supervision: Vec<SupervisionRow>,
    pub events: Vec<EventRecord>,
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, ScenarioError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| ScenarioError::Log(e.to_string()))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ScenarioError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

pub const TRAJECTORY_HEADER: [&str; 10] = ["t", "node_id", "kind", "x", "y", "z", "ref_x", "ref_y", "ref_z", "edge_err_norm"];

pub const SUPERVISION_HEADER: [&str; 19] = [
    "k",
    "t",
    "mode",
    "command_applied",
    "consistent",
    "reason",
    "backend",
    "lambda_min",
    "lambda_max",
    "w_bar",
    "e_minus",
    "e_plus",
    "jump_norm",
    "identity_residual",
    "reinitialized",
    "edges_before",
    "edges_after",
    "isolated",
    "edges",
];

impl RunLogs {
    pub fn trajectory_csv(&self) -> Result<Vec<u8>, ScenarioError> {
        csv_bytes(&self.trajectory, &TRAJECTORY_HEADER)
    }

    pub fn supervision_csv(&self) -> Result<Vec<u8>, ScenarioError> {
        csv_bytes(&self.supervision, &SUPERVISION_HEADER)
    }

    pub fn events_jsonl(&self) -> Result<Vec<u8>, ScenarioError> {
        let mut out = Vec::new();
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Writes the three log files and the config.
    pub fn write_dir(&self, dir: &Path, config: &ScenarioConfig) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), config.to_json())?;
        fs::write(dir.join(TRAJECTORY_FILE), self.trajectory_csv()?)?;
        fs::write(dir.join(SUPERVISION_FILE), self.supervision_csv()?)?;
        let mut f = fs::File::create(dir.join(EVENTS_FILE))?;
        f.write_all(&self.events_jsonl()?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<(ScenarioConfig, RunLogs), ScenarioError> {
        let config: ScenarioConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let trajectory = read_csv(&dir.join(TRAJECTORY_FILE))?;
        let supervision = read_csv(&dir.join(SUPERVISION_FILE))?;
        let mut events = Vec::new();
        for line in BufReader::new(fs::File::open(dir.join(EVENTS_FILE))?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                events.push(serde_json::from_str(&line)?);
            }
        }
        Ok((config, RunLogs { trajectory, supervision, events }))
    }

    /// Logged instants in order, each with its rows.
    pub fn snapshots(&self) -> Vec<(f64, &[TrajectoryRow])> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.trajectory.len() {
            if i == self.trajectory.len() || self.trajectory[i].t != self.trajectory[start].t {
                out.push((self.trajectory[start].t, &self.trajectory[start..i]));
                start = i;
            }
        }
        out
    }

    pub fn events_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a EventRecord> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_logs_have_headers_only() {
        let logs = RunLogs::default();
        let t = String::from_utf8(logs.trajectory_csv().unwrap()).unwrap();
        assert_eq!(t, "t,node_id,kind,x,y,z,ref_x,ref_y,ref_z,edge_err_norm\n");
        assert!(logs.events_jsonl().unwrap().is_empty());
        assert!(logs.snapshots().is_empty());
    }

    #[test]
    fn rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let row = TrajectoryRow {
            t: 0.1,
            node_id: 3,
            kind: NodeKind::Target,
            x: 1.0,
            y: -2.5,
            z: 0.0,
            ref_x: None,
            ref_y: None,
            ref_z: None,
            edge_err_norm: 0.25,
        };
        let logs = RunLogs { trajectory: vec![row.clone()], supervision: vec![], events: vec![] };
        let cfg = crate::scenario::scenario("sar-1").unwrap();
        logs.write_dir(dir.path(), &cfg).unwrap();
        let (back_cfg, back) = RunLogs::read_dir(dir.path()).unwrap();
        assert_eq!(back_cfg, cfg);
        assert_eq!(back.trajectory, vec![row]);
    }
}
