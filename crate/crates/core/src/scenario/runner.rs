//! The mission loop. One tick: rebuild the graph, supervise at check instants,
//! compute the control, log, step.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::logs::{EventRecord, NodeKind, RunLogs, SupervisionRow, TrajectoryRow};
use super::{ScenarioConfig, ScenarioError};
use crate::backends::{BackendError, Grounded, SupervisorBackend};
use crate::dynamics::{
    apply_jump, control_input, edge_error, stacked_control, stacked_norm, step_with_control, DisturbanceSampler,
    RangeProjector, ReferenceSignal, SwarmState, TargetMotion,
};
use crate::graph::{build_graph, lambda_bounds, InteractionGraph, NodeSet};
use crate::supervision::{Command, Intent, Supervisor, SupervisorEvent};
use crate::theory::{CertifyParams, IntervalMonitor, IntervalRow};
use crate::Vec3;

/// Numerical health of a run, gathered on every tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub ticks: usize,
    pub checks: usize,
    /// Largest `‖e - Π e‖` with `Π` the projector onto `range(E_a^T ⊗ I)`.
    pub max_range_residual: f64,
    /// Largest gap between the neighbor-sum and stacked forms of the control.
    pub max_control_gap: f64,
    pub isolated_ticks: usize,
    pub graph_changes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub t: f64,
    pub supervised: bool,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub logs: RunLogs,
    pub stats: RunStats,
    /// Live envelope rows, computed from every tick rather than the logged samples.
    pub bound_rows: Vec<IntervalRow>,
}

pub struct Simulation {
    config: ScenarioConfig,
    nodes: NodeSet,
    state: SwarmState,
    reference: ReferenceSignal,
    supervisor: Supervisor,
    backend: Box<dyn SupervisorBackend>,
    sampler: DisturbanceSampler,
    motion: TargetMotion,
    tick: usize,
    next_command: usize,
    last_graph: Option<InteractionGraph>,
    projector: Option<RangeProjector>,
    isolated: Vec<usize>,
    monitor: Option<IntervalMonitor>,
    bound_rows: Vec<IntervalRow>,
    logs: RunLogs,
    seq: u64,
    stats: RunStats,
    cert: CertifyParams,
}

fn event_payload(ev: &SupervisorEvent) -> Value {
    match serde_json::to_value(ev) {
        Ok(Value::Object(mut m)) => m.remove("payload").unwrap_or(Value::Null),
        _ => Value::Null,
    }
}

fn isolated_drones(graph: &InteractionGraph) -> Vec<usize> {
    let mut seen = vec![false; graph.nodes.num_drones];
    for &(i, j) in &graph.edges {
        seen[i] = true;
        if j < seen.len() {
            seen[j] = true;
        }
    }
    (0..seen.len()).filter(|&i| !seen[i]).collect()
}

impl Simulation {
    pub fn new(config: ScenarioConfig, backend: Box<dyn SupervisorBackend>) -> Result<Self, ScenarioError> {
        config.validate()?;
        let nodes = NodeSet::new(config.num_drones, config.targets.len(), 3)?;
        let state = config.initial_state();
        let mut sup_cfg = config.supervisor.clone();
        sup_cfg.observation_radius = config.observation_radius;
        let mut supervisor = Supervisor::new(sup_cfg, &state);
        if let Some(c) = &config.initial_command {
            supervisor.submit(c.clone());
        }
        Ok(Self {
            nodes,
            reference: ReferenceSignal::hold(state.drones.clone(), 0.0),
            sampler: config.disturbance.sampler(config.num_drones, 3),
            motion: config.motion(),
            state,
            supervisor,
            backend,
            tick: 0,
            next_command: 0,
            last_graph: None,
            projector: None,
            isolated: Vec::new(),
            monitor: None,
            bound_rows: Vec::new(),
            logs: RunLogs::default(),
            seq: 0,
            stats: RunStats::default(),
            cert: CertifyParams::default(),
            config,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn state(&self) -> &SwarmState {
        &self.state
    }

    pub fn reference(&self) -> &ReferenceSignal {
        &self.reference
    }

    pub fn supervisor(&self) -> &Supervisor {
        &self.supervisor
    }

    pub fn intent(&self) -> Option<&Intent> {
        self.supervisor.intent()
    }

    pub fn backend_mut(&mut self) -> &mut dyn SupervisorBackend {
        self.backend.as_mut()
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn tick_index(&self) -> usize {
        self.tick
    }

    pub fn finished(&self) -> bool {
        self.tick >= self.config.total_ticks()
    }

    pub fn logs(&self) -> &RunLogs {
        &self.logs
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Time of the next supervision instant at or after the current tick.
    pub fn next_check_time(&self) -> f64 {
        let spc = self.config.steps_per_check();
        let k = self.tick.div_ceil(spc);
        k as f64 * self.config.check_interval
    }

    /// Queues an operator command; it is applied at the next supervision instant.
    pub fn submit(&mut self, command: Command) -> f64 {
        self.supervisor.submit(command);
        self.next_check_time()
    }

    pub fn backend_is_pure(&self) -> bool {
        self.backend.is_pure()
    }

    /// Grounds `text` against the current state without queueing it.
    pub fn preview(&mut self, text: &str) -> Result<Grounded, BackendError> {
        self.supervisor.preview(text, &self.state, self.backend.as_mut())
    }

    /// Latest envelope row, including the interval in progress.
    pub fn latest_bound_row(&self) -> Option<IntervalRow> {
        self.monitor.as_ref().map(IntervalMonitor::row).or_else(|| self.bound_rows.last().cloned())
    }

    fn push_event(&mut self, t: f64, kind: &str, payload: Value, out: &mut Vec<EventRecord>) {
        let rec = EventRecord { t, seq: self.seq, kind: kind.to_string(), payload };
        self.seq += 1;
        out.push(rec.clone());
        self.logs.events.push(rec);
    }

    fn supervise(&mut self, graph: &InteractionGraph, before: &InteractionGraph, t: f64, out: &mut Vec<EventRecord>) {
        let k = self.tick / self.config.steps_per_check();
        while let Some(c) = self.config.commands.get(self.next_command) {
            if c.t > t + 1e-9 {
                break;
            }
            self.supervisor.submit(c.command.clone());
            self.next_command += 1;
        }
        let outcome = self.supervisor.supervise(&self.state, self.backend.as_mut());
        for ev in &outcome.events {
            self.push_event(t, ev.kind(), event_payload(ev), out);
        }
        let new_ref = self.supervisor.reference().to_vec();
        let changed = new_ref != self.reference.drones;
        let (reference, jump) = apply_jump(&self.reference, new_ref, before, graph, &self.state);
        if changed {
            self.push_event(t, "jump", serde_json::to_value(&jump).unwrap_or(Value::Null), out);
        }
        self.reference = reference;
        if let Some(m) = self.monitor.take() {
            self.bound_rows.push(m.row());
        }
        let bounds = lambda_bounds(graph);
        let d_bar = self.config.disturbance.bound;
        let verdict = outcome.verdict.as_ref();
        let row = SupervisionRow {
            k,
            t,
            mode: self.supervisor.intent().map_or("none", |i| i.mode.as_str()).to_string(),
            command_applied: outcome.command_applied,
            consistent: verdict.map(|v| v.consistent),
            reason: verdict.map(|v| v.reason.clone()).unwrap_or_default(),
            backend: self.backend.name().to_string(),
            lambda_min: bounds.map(|b| b.0),
            lambda_max: bounds.map(|b| b.1),
            w_bar: bounds.map(|b| b.1.sqrt() * d_bar),
            e_minus: jump.e_minus_norm,
            e_plus: jump.e_plus_norm,
            jump_norm: jump.delta_norm,
            identity_residual: jump.identity_residual,
            reinitialized: jump.reinitialized,
            edges_before: jump.edges_before,
            edges_after: jump.edges_after,
            isolated: isolated_drones(graph).len(),
            edges: graph.edge_string(),
        };
        self.logs.supervision.push(row);
        let jump_tuple = (k > 0).then_some((jump.e_minus_norm, jump.e_plus_norm, jump.delta_norm, jump.reinitialized));
        self.monitor = Some(IntervalMonitor::start(
            k,
            t,
            graph,
            d_bar,
            self.config.check_interval,
            self.config.dt,
            jump.e_plus_norm,
            jump_tuple,
            &self.cert,
        ));
        self.stats.checks += 1;
    }

    fn log_instant(&mut self, t: f64, e_norm: f64) {
        let na = self.state.drones.len();
        for (i, p) in self.state.drones.iter().enumerate() {
            let r = self.reference.drones[i];
            self.logs.trajectory.push(TrajectoryRow {
                t,
                node_id: i,
                kind: NodeKind::Drone,
                x: p.x,
                y: p.y,
                z: p.z,
                ref_x: Some(r.x),
                ref_y: Some(r.y),
                ref_z: Some(r.z),
                edge_err_norm: e_norm,
            });
        }
        for (j, p) in self.state.targets.iter().enumerate() {
            self.logs.trajectory.push(TrajectoryRow {
                t,
                node_id: na + j,
                kind: NodeKind::Target,
                x: p.x,
                y: p.y,
                z: p.z,
                ref_x: None,
                ref_y: None,
                ref_z: None,
                edge_err_norm: e_norm,
            });
        }
    }

    /// Advances one tick. A no-op once the run is finished.
    pub fn step(&mut self) -> Result<TickReport, ScenarioError> {
        let t = self.time();
        let mut events = Vec::new();
        if self.finished() {
            return Ok(TickReport { t, supervised: false, events });
        }
        self.state.time = t;
        let graph = build_graph(&self.state.positions(), self.nodes, self.config.observation_radius)?;
        let before = self.last_graph.clone().unwrap_or_else(|| graph.clone());
        if !before.same_edges(&graph) {
            self.stats.graph_changes += 1;
            let payload = json!({ "edges_before": before.edge_count(), "edges_after": graph.edge_count() });
            self.push_event(t, "graph_change", payload, &mut events);
            // a change right at a check instant falls between the previous interval's samples
            if !self.tick.is_multiple_of(self.config.steps_per_check()) {
                if let Some(m) = self.monitor.as_mut() {
                    m.flag_graph_change();
                }
            }
        }
        let isolated = isolated_drones(&graph);
        if !isolated.is_empty() {
            self.stats.isolated_ticks += 1;
        }
        if isolated != self.isolated {
            self.push_event(t, "isolated", json!({ "drones": isolated }), &mut events);
            self.isolated = isolated;
        }

        let spc = self.config.steps_per_check();
        let supervised = self.tick.is_multiple_of(spc);
        if supervised {
            self.supervise(&graph, &before, t, &mut events);
        }

        let e = edge_error(&self.state, &self.reference, &graph);
        let e_norm = stacked_norm(&e);
        let u = control_input(&self.state, &self.reference, &graph);
        let u_stacked = stacked_control(&graph, &e);
        let gap = u.iter().zip(&u_stacked).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        self.stats.max_control_gap = self.stats.max_control_gap.max(gap);
        if !self.projector.as_ref().is_some_and(|p| p.matches(&graph)) {
            self.projector = Some(RangeProjector::new(&graph));
        }
        let residual = self.projector.as_ref().map_or(0.0, |p| p.residual(&e));
        self.stats.max_range_residual = self.stats.max_range_residual.max(residual);
        if let Some(m) = self.monitor.as_mut() {
            m.sample(t - (self.tick / spc * spc) as f64 * self.config.dt, e_norm);
        }
        if self.tick.is_multiple_of(self.config.log_every) {
            self.log_instant(t, e_norm);
        }

        let d = self.sampler.sample(t);
        let v = self.motion.velocities(t, self.config.dt);
        let mut next = step_with_control(&self.state, &u, &d, &v, self.config.dt)?;
        self.tick += 1;
        next.time = self.time();
        self.state = next;
        self.last_graph = Some(graph);
        self.stats.ticks += 1;

        if self.finished() {
            self.finish_logs()?;
        }
        Ok(TickReport { t, supervised, events })
    }

    /// Final instant `t = duration`: sampled and logged, no check.
    fn finish_logs(&mut self) -> Result<(), ScenarioError> {
        let t = self.time();
        let graph = build_graph(&self.state.positions(), self.nodes, self.config.observation_radius)?;
        let e_norm = stacked_norm(&edge_error(&self.state, &self.reference, &graph));
        if let Some(m) = self.monitor.as_mut() {
            if let Some(before) = &self.last_graph {
                if !before.same_edges(&graph) {
                    m.flag_graph_change();
                }
            }
            let spc = self.config.steps_per_check();
            let t_k = ((self.tick - 1) / spc * spc) as f64 * self.config.dt;
            m.sample(t - t_k, e_norm);
        }
        if let Some(m) = self.monitor.take() {
            self.bound_rows.push(m.row());
        }
        if self.tick.is_multiple_of(self.config.log_every) {
            self.log_instant(t, e_norm);
        }
        Ok(())
    }

    /// Runs until `t` (exclusive) or the end of the mission.
    pub fn run_until(&mut self, t: f64) -> Result<(), ScenarioError> {
        while !self.finished() && self.time() < t - 1e-9 {
            self.step()?;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<(), ScenarioError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_output(self) -> RunOutput {
        let mut bound_rows = self.bound_rows;
        if let Some(m) = self.monitor {
            bound_rows.push(m.row());
        }
        RunOutput { config: self.config, logs: self.logs, stats: self.stats, bound_rows }
    }

    /// Positions and references for every node, drones first.
    pub fn node_view(&self) -> Vec<(usize, NodeKind, Vec3, Option<Vec3>)> {
        let na = self.state.drones.len();
        self.state
            .drones
            .iter()
            .enumerate()
            .map(|(i, p)| (i, NodeKind::Drone, *p, Some(self.reference.drones[i])))
            .chain(self.state.targets.iter().enumerate().map(|(j, p)| (na + j, NodeKind::Target, *p, None)))
            .collect()
    }
}

/// Runs a mission headless to completion.
pub fn run(config: ScenarioConfig, backend: Box<dyn SupervisorBackend>) -> Result<RunOutput, ScenarioError> {
    let mut sim = Simulation::new(config, backend)?;
    sim.run_to_end()?;
    Ok(sim.into_output())
}
