//! One live mission: the simulation plus run phase, pacing and operator input.

use std::path::PathBuf;

use edgeform::backends::SupervisorBackend;
use edgeform::scenario::{ScenarioConfig, Simulation};
use edgeform::supervision::Command;

use crate::artifacts::{write_run, RunArtifacts};
use crate::wire::{CommandAck, Control, ControlAction, NodeState, Phase, Snapshot, Status};
use crate::StationError;

pub const MIN_TIME_SCALE: f64 = 0.1;
pub const MAX_TIME_SCALE: f64 = 100.0;

pub struct Session {
    sim: Simulation,
    phase: Phase,
    time_scale: f64,
    /// Simulated time the pacer has asked for so far.
    target: f64,
    event_cursor: usize,
    out_dir: Option<PathBuf>,
    artifacts: Option<RunArtifacts>,
}

fn arr(v: &edgeform::Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl Session {
    pub fn new(
        config: ScenarioConfig,
        backend: Box<dyn SupervisorBackend>,
        out_dir: Option<PathBuf>,
    ) -> Result<Self, StationError> {
        Ok(Self {
            sim: Simulation::new(config, backend)?,
            phase: Phase::Idle,
            time_scale: 1.0,
            target: 0.0,
            event_cursor: 0,
            out_dir,
            artifacts: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Set once the run has finished and, with an output directory, been written.
    pub fn artifacts(&self) -> Option<&RunArtifacts> {
        self.artifacts.as_ref()
    }

    pub fn status(&self, clients: usize) -> Status {
        Status {
            scenario: self.sim.config().name.clone(),
            phase: self.phase,
            t: self.sim.time(),
            time_scale: self.time_scale,
            next_check: self.sim.next_check_time(),
            clients,
            pending_commands: self.sim.supervisor().pending(),
        }
    }

    pub fn start(&mut self) -> Result<(), StationError> {
        self.transition(Phase::Idle, Phase::Running)
    }

    fn transition(&mut self, from: Phase, to: Phase) -> Result<(), StationError> {
        if self.phase != from {
            return Err(StationError::Transition { from: self.phase, action: format!("{to:?}").to_lowercase() });
        }
        self.phase = to;
        Ok(())
    }

    fn invalid(&self, action: ControlAction) -> StationError {
        StationError::Transition { from: self.phase, action: format!("{action:?}").to_lowercase() }
    }

    pub fn control(&mut self, control: &Control) -> Result<Status, StationError> {
        use ControlAction::*;
        match (control.action, self.phase) {
            (_, Phase::Finished) => return Err(self.invalid(control.action)),
            (Pause, Phase::Running | Phase::Idle) => self.phase = Phase::Paused,
            (Resume, Phase::Paused | Phase::Idle) => {
                self.phase = Phase::Running;
                self.target = self.sim.time();
            }
            (Step, Phase::Paused | Phase::Idle) => {
                self.phase = Phase::Paused;
                self.step_check()?;
            }
            (SetTimeScale, _) => {
                let s = control
                    .time_scale
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| StationError::Request("set_time_scale needs a finite time_scale".into()))?;
                self.time_scale = s.clamp(MIN_TIME_SCALE, MAX_TIME_SCALE);
            }
            (Stop, _) => self.finish()?,
            _ => return Err(self.invalid(control.action)),
        }
        Ok(self.status(0))
    }

    /// Advances to the next supervision instant.
    fn step_check(&mut self) -> Result<(), StationError> {
        let delta = self.sim.config().check_interval;
        let k = (self.sim.time() / delta + 1e-9).floor() + 1.0;
        self.sim.run_until(k * delta)?;
        self.target = self.sim.time();
        if self.sim.finished() {
            self.finish()?;
        }
        Ok(())
    }

    /// Queues an operator command for the next supervision instant.
    pub fn submit(&mut self, command: Command) -> Result<CommandAck, StationError> {
        if !matches!(self.phase, Phase::Running | Phase::Paused) || self.sim.finished() {
            return Err(StationError::Transition { from: self.phase, action: "command".into() });
        }
        let text = command.describe();
        let mut ack = CommandAck { accepted: false, text: text.clone(), applied_at: None, intent: None, warnings: Vec::new(), error: None };
        match &command {
            Command::Text(t) if self.sim.backend_is_pure() => match self.sim.preview(t) {
                Err(e) => {
                    ack.error = Some(e.to_string());
                    return Ok(ack);
                }
                Ok(g) if !g.recognized => {
                    ack.error = Some(format!("unrecognized command {t:?}"));
                    return Ok(ack);
                }
                Ok(g) => {
                    ack.intent = Some(g.intent);
                    ack.warnings = g.warnings;
                }
            },
            Command::Text(_) => {}
            Command::Intent(i) => {
                if let Err(e) = i.check_form() {
                    ack.error = Some(e.to_string());
                    return Ok(ack);
                }
                ack.intent = Some(i.clone());
            }
        }
        ack.accepted = true;
        ack.applied_at = Some(self.sim.submit(command));
        Ok(ack)
    }

    /// Moves simulated time forward by `wall_seconds` scaled by the time scale, while running.
    pub fn advance(&mut self, wall_seconds: f64) -> Result<(), StationError> {
        if self.phase != Phase::Running {
            return Ok(());
        }
        self.target += wall_seconds * self.time_scale;
        self.sim.run_until(self.target)?;
        if self.sim.finished() {
            self.finish()?;
        }
        Ok(())
    }

    /// Runs to the end of the mission immediately.
    pub fn run_to_end(&mut self) -> Result<(), StationError> {
        self.sim.run_to_end()?;
        self.finish()
    }

    /// Ends the run and writes its directory, once.
    pub fn finish(&mut self) -> Result<(), StationError> {
        if self.phase == Phase::Finished {
            return Ok(());
        }
        self.phase = Phase::Finished;
        if let Some(dir) = &self.out_dir {
            self.artifacts = Some(write_run(dir, self.sim.config(), self.sim.logs())?);
        }
        Ok(())
    }

    /// Current scene plus every event logged since the previous snapshot.
    pub fn snapshot(&mut self, clients: usize) -> Snapshot {
        let events = &self.sim.logs().events;
        let events_since_last = events[self.event_cursor.min(events.len())..].to_vec();
        self.event_cursor = events.len();
        Snapshot {
            t: self.sim.time(),
            status: self.status(clients),
            nodes: self
                .sim
                .node_view()
                .into_iter()
                .map(|(id, kind, p, r)| NodeState { id, kind, pos: arr(&p), reference: r.as_ref().map(arr) })
                .collect(),
            intent: self.sim.intent().cloned(),
            events_since_last,
            bound_row: self.sim.latest_bound_row(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgeform::backends::RuleBackend;
    use edgeform::scenario::{builtin::hover, run};
    use edgeform::supervision::Shape;

    fn config() -> ScenarioConfig {
        let mut cfg = hover(4, Command::Text("Hold a square formation.".into()));
        cfg.duration = 4.0;
        cfg
    }

    fn session() -> Session {
        Session::new(config(), Box::new(RuleBackend), None).unwrap()
    }

    #[test]
    fn phases_follow_controls() {
        let mut s = session();
        assert_eq!(s.phase(), Phase::Idle);
        assert!(s.submit(Command::Text("form a circle".into())).is_err());
        s.control(&Control::request(ControlAction::Pause)).unwrap();
        assert!(s.control(&Control::request(ControlAction::Pause)).is_err());
        s.control(&Control::request(ControlAction::Resume)).unwrap();
        assert_eq!(s.phase(), Phase::Running);
        assert!(s.control(&Control::request(ControlAction::Step)).is_err());
        s.control(&Control::request(ControlAction::Stop)).unwrap();
        assert_eq!(s.phase(), Phase::Finished);
        assert!(s.control(&Control::request(ControlAction::Resume)).is_err());
    }

    #[test]
    fn time_scale_is_clamped() {
        let mut s = session();
        let mut c = Control::request(ControlAction::SetTimeScale);
        c.time_scale = Some(1e6);
        assert_eq!(s.control(&c).unwrap().time_scale, MAX_TIME_SCALE);
        c.time_scale = Some(0.0);
        assert_eq!(s.control(&c).unwrap().time_scale, MIN_TIME_SCALE);
        c.time_scale = None;
        assert!(s.control(&c).is_err());
    }

    #[test]
    fn steps_land_on_checks_and_match_headless() {
        let mut s = session();
        for k in 1..=3 {
            s.control(&Control::request(ControlAction::Step)).unwrap();
            assert!((s.simulation().time() - k as f64).abs() < 1e-12);
        }
        let cfg = config();
        let mut headless = Simulation::new(cfg.clone(), Box::new(RuleBackend)).unwrap();
        headless.run_until(3.0).unwrap();
        assert_eq!(headless.state(), s.simulation().state());
        s.control(&Control::request(ControlAction::Step)).unwrap();
        assert_eq!(s.phase(), Phase::Finished);
        assert_eq!(s.simulation().logs(), &run(cfg, Box::new(RuleBackend)).unwrap().logs);
    }

    #[test]
    fn commands_are_acked_with_next_check() {
        let mut s = session();
        s.control(&Control::request(ControlAction::Pause)).unwrap();
        s.sim.run_until(1.5).unwrap();
        let ack = s.submit(Command::Text("Form a circle.".into())).unwrap();
        assert!(ack.accepted);
        assert_eq!(ack.applied_at, Some(2.0));
        assert_eq!(ack.intent.unwrap().formation, Shape::Circle);
        let bad = s.submit(Command::Text("qwzx blorp".into())).unwrap();
        assert!(!bad.accepted && bad.error.is_some() && bad.applied_at.is_none());
        assert_eq!(s.status(0).pending_commands, 1);
    }

    #[test]
    fn snapshots_carry_new_events_once() {
        let mut s = session();
        s.control(&Control::request(ControlAction::Step)).unwrap();
        let first = s.snapshot(1);
        assert!(!first.events_since_last.is_empty());
        assert_eq!(first.nodes.len(), 5);
        assert_eq!(first.status.clients, 1);
        assert!(s.snapshot(1).events_since_last.is_empty());
    }
}
