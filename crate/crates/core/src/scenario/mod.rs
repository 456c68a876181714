//! End-to-end missions: configuration, the simulation loop, built-in fixtures,
//! run logs and mission metrics.

pub mod builtin;
pub mod logs;
pub mod metrics;
pub mod runner;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DisturbanceModel, DynamicsError, SwarmState, TargetMotion, TargetScript};
use crate::graph::GraphError;
use crate::supervision::{Command, SupervisorConfig};
use crate::Vec3;

pub use builtin::{builtin_scenarios, scenario};
pub use logs::{
    EventRecord, NodeKind, RunLogs, SupervisionRow, TrajectoryRow, CONFIG_FILE, EVENTS_FILE, METRICS_FILE, SUPERVISION_FILE,
    TRAJECTORY_FILE,
};
pub use metrics::{metrics, Metrics};
pub use runner::{run, RunOutput, Simulation, TickReport};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("unknown scenario {0:?}")]
    Unknown(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed log: {0}")]
    Log(String),
}

/// A command the operator issues at a given mission time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledCommand {
    pub t: f64,
    pub command: Command,
}

impl ScheduledCommand {
    pub fn text(t: f64, text: &str) -> Self {
        Self { t, command: Command::Text(text.to_string()) }
    }
}

/// Drones start uniformly scattered in this box unless explicit positions are given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub num_drones: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone_start: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn: Option<SpawnBox>,
    pub targets: Vec<TargetScript>,
    pub observation_radius: f64,
    pub check_interval: f64,
    pub dt: f64,
    pub duration: f64,
    /// Trajectory rows are written every this many ticks.
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    pub disturbance: DisturbanceModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_command: Option<Command>,
    #[serde(default)]
    pub commands: Vec<ScheduledCommand>,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
}

fn default_log_every() -> usize {
    1
}

fn whole_multiple(value: f64, unit: f64) -> Option<usize> {
    let n = (value / unit).round();
    ((n * unit - value).abs() <= 1e-9 * value.abs().max(1.0) && n >= 0.0).then_some(n as usize)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.check_interval > 0.0) || whole_multiple(self.check_interval, self.dt).is_none_or(|n| n == 0) {
            return bad(format!("check interval {} is not a whole multiple of dt {}", self.check_interval, self.dt));
        }
        if !(self.duration >= 0.0) || whole_multiple(self.duration, self.dt).is_none() {
            return bad(format!("duration {} is not a whole multiple of dt {}", self.duration, self.dt));
        }
        if self.log_every == 0 || !self.steps_per_check().is_multiple_of(self.log_every) {
            return bad(format!("log_every {} must divide the ticks per check {}", self.log_every, self.steps_per_check()));
        }
        if self.num_drones == 0 {
            return bad("at least one drone is required".into());
        }
        if !(self.observation_radius > 0.0) {
            return bad("observation radius must be positive".into());
        }
        if let Some(start) = &self.drone_start {
            if start.len() != self.num_drones {
                return bad(format!("{} start positions for {} drones", start.len(), self.num_drones));
            }
        } else if self.spawn.is_none() {
            return bad("either drone_start or spawn is required".into());
        }
        if self.disturbance.bound < 0.0 {
            return bad("disturbance bound must be non-negative".into());
        }
        if self.commands.iter().any(|c| !(c.t >= 0.0)) {
            return bad("command times must be non-negative".into());
        }
        Ok(())
    }

    pub fn steps_per_check(&self) -> usize {
        whole_multiple(self.check_interval, self.dt).unwrap_or(1).max(1)
    }

    pub fn total_ticks(&self) -> usize {
        whole_multiple(self.duration, self.dt).unwrap_or(0)
    }

    pub fn motion(&self) -> TargetMotion {
        TargetMotion { scripts: self.targets.clone() }
    }

    pub fn initial_state(&self) -> SwarmState {
        let drones = match (&self.drone_start, &self.spawn) {
            (Some(start), _) => start.iter().map(|p| Vec3::from(*p)).collect(),
            (None, Some(b)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5ca7_7e5d);
                (0..self.num_drones)
                    .map(|_| {
                        let mut p = Vec3::zeros();
                        for c in 0..3 {
                            p[c] = if b.min[c] < b.max[c] { rng.random_range(b.min[c]..b.max[c]) } else { b.min[c] };
                        }
                        p
                    })
                    .collect()
            }
            (None, None) => vec![Vec3::zeros(); self.num_drones],
        };
        SwarmState::new(0.0, drones, self.motion().positions_at(0.0))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.disturbance.seed = seed;
        self.supervisor.seed = seed;
        self
    }

    /// Replaces `dt` and the check interval, keeping the logging period where it still divides a check.
    pub fn with_timing(mut self, dt: Option<f64>, check_interval: Option<f64>) -> Result<Self, ScenarioError> {
        let period = self.log_every as f64 * self.dt;
        self.dt = dt.unwrap_or(self.dt);
        self.check_interval = check_interval.unwrap_or(self.check_interval);
        self.log_every = 1;
        self.validate()?;
        let every = ((period / self.dt).round() as usize).max(1);
        if self.steps_per_check().is_multiple_of(every) {
            self.log_every = every;
        }
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_interval_must_divide() {
        let mut c = scenario("chase-1").unwrap();
        c.check_interval = 1.005;
        assert!(matches!(c.validate(), Err(ScenarioError::Config(_))));
        c.check_interval = 1.0;
        c.validate().unwrap();
        c.duration = 0.0;
        c.validate().unwrap();
        c.log_every = 7;
        assert!(c.validate().is_err());
    }

    #[test]
    fn retiming_keeps_log_period() {
        let c = builtin::scenario("chase-1").unwrap().with_timing(Some(0.005), None).unwrap();
        assert_eq!((c.log_every, c.steps_per_check()), (20, 200));
        let odd = builtin::scenario("chase-1").unwrap().with_timing(Some(0.3), Some(0.9)).unwrap();
        assert_eq!(odd.log_every, 1);
        assert!(builtin::scenario("chase-1").unwrap().with_timing(Some(0.3), None).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        for c in builtin_scenarios() {
            let back: ScenarioConfig = serde_json::from_str(&c.to_json()).unwrap();
            assert_eq!(back, c);
        }
    }
}
