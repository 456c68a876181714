//! The middle layer as a stateful object driven once per supervision instant.

use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grounding::{ground_intent, reground_tracking, verify_and_correct, Assignment, CheckFailure, Partitioning, Plan};
use super::intent::{Intent, Mode, Shape};
use super::search::{search_tick, Detection, SearchEvent};
use super::{SearchRegion, SupervisorConfig, VerificationVerdict};
use crate::backends::{feedback_csv, BackendError, BackendTemplates, CheckRequest, Grounded, GroundingContext, SupervisorBackend};
use crate::dynamics::SwarmState;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Command {
    Text(String),
    Intent(Intent),
}

impl Command {
    pub fn describe(&self) -> String {
        match self {
            Command::Text(t) => t.clone(),
            Command::Intent(i) => i.to_json(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum SupervisorEvent {
    Command { text: String, intent: Intent },
    CommandRejected { text: String, error: String },
    Warning { message: String },
    Verdict { consistent: bool, reason: String, failures: Vec<CheckFailure>, backend: String },
    Reground { mode: Mode, split: bool, sizes: Vec<usize>, groups: Vec<GroupSummary> },
    Split { sizes: Vec<usize> },
    Merge { sizes: Vec<usize> },
    Rebalance { from: Vec<usize>, to: Vec<usize> },
    Detection(Detection),
    Waypoint { drone: usize, waypoint: Vec3 },
    Cleared { drone: usize, waypoint: Vec3 },
    RegionExpanded { region: SearchRegion },
    BackendFailure { stage: String, error: String },
}

impl SupervisorEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            SupervisorEvent::Command { .. } => "command",
            SupervisorEvent::CommandRejected { .. } => "command_rejected",
            SupervisorEvent::Warning { .. } => "warning",
            SupervisorEvent::Verdict { .. } => "verdict",
            SupervisorEvent::Reground { .. } => "reground",
            SupervisorEvent::Split { .. } => "split",
            SupervisorEvent::Merge { .. } => "merge",
            SupervisorEvent::Rebalance { .. } => "rebalance",
            SupervisorEvent::Detection(_) => "detection",
            SupervisorEvent::Waypoint { .. } => "waypoint",
            SupervisorEvent::Cleared { .. } => "cleared",
            SupervisorEvent::RegionExpanded { .. } => "region_expanded",
            SupervisorEvent::BackendFailure { .. } => "backend_failure",
        }
    }
}

/// Membership and placement of one formation group after a re-grounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub shape: Shape,
    pub members: Vec<usize>,
    pub center: Vec3,
}

fn reground_event(mode: Mode, a: &Assignment) -> SupervisorEvent {
    SupervisorEvent::Reground {
        mode,
        split: a.split,
        sizes: a.group_sizes(),
        groups: a
            .groups
            .iter()
            .map(|g| GroupSummary { shape: g.shape, members: g.members.clone(), center: g.center })
            .collect(),
    }
}

impl From<SearchEvent> for SupervisorEvent {
    fn from(e: SearchEvent) -> Self {
        match e {
            SearchEvent::Waypoint { drone, waypoint } => SupervisorEvent::Waypoint { drone, waypoint },
            SearchEvent::Cleared { drone, waypoint } => SupervisorEvent::Cleared { drone, waypoint },
            SearchEvent::Detected(d) => SupervisorEvent::Detection(d),
            SearchEvent::RegionExpanded { region } => SupervisorEvent::RegionExpanded { region },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckOutcome {
    /// `None` when no check ran: a command was applied, nothing is stored, or the backend failed.
    pub verdict: Option<VerificationVerdict>,
    /// Set when the enforced reference changes at this instant.
    pub new_reference: Option<Vec<Vec3>>,
    pub command_applied: bool,
    pub events: Vec<SupervisorEvent>,
}

#[derive(Debug, Clone)]
pub struct Supervisor {
    pub config: SupervisorConfig,
    intent: Option<Intent>,
    cmd_text: String,
    plan: Option<Plan>,
    cooldown: usize,
    rng: ChaCha8Rng,
    pending: VecDeque<Command>,
    reference: Vec<Vec3>,
    /// Formation reference before the approach cap.
    goal: Vec<Vec3>,
    checks: usize,
}

fn memberships(a: &Assignment) -> Vec<Vec<usize>> {
    a.groups.iter().map(|g| g.members.clone()).collect()
}

impl Supervisor {
    /// Starts with no stored command, holding the drones where they are.
    pub fn new(config: SupervisorConfig, initial: &SwarmState) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            config,
            intent: None,
            cmd_text: String::new(),
            plan: None,
            cooldown: 0,
            rng,
            pending: VecDeque::new(),
            reference: initial.drones.clone(),
            goal: initial.drones.clone(),
            checks: 0,
        }
    }

    pub fn submit(&mut self, command: Command) {
        self.pending.push_back(command);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn intent(&self) -> Option<&Intent> {
        self.intent.as_ref()
    }

    pub fn cmd_text(&self) -> &str {
        &self.cmd_text
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_ref()
    }

    pub fn assignment(&self) -> Option<&Assignment> {
        match &self.plan {
            Some(Plan::Formation(a)) => Some(a),
            _ => None,
        }
    }

    pub fn reference(&self) -> &[Vec3] {
        &self.reference
    }

    /// Uncapped formation reference the enforced one is walking toward.
    pub fn goal(&self) -> &[Vec3] {
        &self.goal
    }

    pub fn cooldown(&self) -> usize {
        self.cooldown
    }

    pub fn checks(&self) -> usize {
        self.checks
    }

    fn context<'a>(&'a self, state: &'a SwarmState) -> GroundingContext<'a> {
        GroundingContext {
            state,
            stored: self.intent.as_ref(),
            default_region: self.config.default_search_region,
            search_target: self.config.search_target,
        }
    }

    /// Grounds text against the stored intent without changing anything.
    pub fn preview(&self, text: &str, state: &SwarmState, backend: &mut dyn SupervisorBackend) -> Result<Grounded, BackendError> {
        let g = backend.ground(text, &self.context(state))?;
        g.intent.check_form()?;
        Ok(g)
    }

    /// Fingerprint of everything a check can change.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        format!("{:?}", (&self.intent, &self.cmd_text, &self.plan, self.cooldown, &self.reference, &self.goal, &self.pending))
            .hash(&mut h);
        self.rng.get_word_pos().hash(&mut h);
        h.finish()
    }

    fn apply_command(
        &mut self,
        command: Command,
        state: &SwarmState,
        backend: &mut dyn SupervisorBackend,
        events: &mut Vec<SupervisorEvent>,
    ) -> bool {
        let text = command.describe();
        let grounded = match command {
            Command::Text(t) => self.preview(&t, state, backend),
            Command::Intent(i) => i.check_form().map(|_| Grounded { intent: i, warnings: Vec::new(), recognized: true }).map_err(Into::into),
        };
        let grounded = match grounded {
            Ok(g) => g,
            Err(e) => {
                events.push(SupervisorEvent::CommandRejected { text, error: e.to_string() });
                return false;
            }
        };
        let previous = self.assignment().cloned();
        let mut rng = self.rng.clone();
        let plan = ground_intent(
            &grounded.intent,
            state,
            &self.config,
            previous.as_ref(),
            &mut BackendTemplates(backend),
            &mut rng,
        );
        let plan = match plan {
            Ok(p) => p,
            Err(e) => {
                events.push(SupervisorEvent::CommandRejected { text, error: e.to_string() });
                return false;
            }
        };
        self.rng = rng;
        events.extend(grounded.warnings.into_iter().map(|message| SupervisorEvent::Warning { message }));
        events.push(SupervisorEvent::Command { text: text.clone(), intent: grounded.intent.clone() });
        match &plan {
            Plan::Formation(a) => events.push(reground_event(grounded.intent.mode, a)),
            Plan::Search(s) => events.extend(
                s.waypoints
                    .iter()
                    .enumerate()
                    .filter_map(|(drone, w)| w.map(|waypoint| SupervisorEvent::Waypoint { drone, waypoint })),
            ),
        }
        let mut intent = grounded.intent;
        if intent.mode == Mode::Search {
            intent.search_region = intent.search_region.or(self.config.default_search_region);
            intent.search_target = intent.search_target.or(self.config.search_target);
        }
        self.goal = plan.reference(state);
        self.reference = self.goal.clone();
        self.plan = Some(plan);
        self.intent = Some(intent);
        self.cmd_text = text;
        self.cooldown = 0;
        true
    }

    /// One supervision instant: drain commands, then verify and correct the stored one.
    pub fn supervise(&mut self, state: &SwarmState, backend: &mut dyn SupervisorBackend) -> CheckOutcome {
        self.checks += 1;
        let before = self.reference.clone();
        let mut out = CheckOutcome::default();
        while let Some(cmd) = self.pending.pop_front() {
            out.command_applied |= self.apply_command(cmd, state, backend, &mut out.events);
        }
        if out.command_applied {
            self.approach(state);
            out.new_reference = (self.reference != before).then(|| self.reference.clone());
            return out;
        }
        self.cooldown = self.cooldown.saturating_sub(1);
        match self.plan.clone() {
            None => {}
            Some(Plan::Formation(a)) => self.check_formation(a, state, backend, &mut out),
            Some(Plan::Search(s)) => {
                let intent = self.intent.clone().expect("search plan has an intent");
                let up = search_tick(&s, &intent, state, &self.config, &mut self.rng);
                out.events.extend(up.events.into_iter().map(SupervisorEvent::from));
                if let Some(track) = up.switch_to {
                    let mut rng = self.rng.clone();
                    match ground_intent(&track, state, &self.config, None, &mut BackendTemplates(backend), &mut rng) {
                        Ok(plan) => {
                            self.rng = rng;
                            if let Plan::Formation(a) = &plan {
                                out.events.push(reground_event(Mode::Track, a));
                            }
                            self.goal = plan.reference(state);
                            self.reference = self.goal.clone();
                            self.plan = Some(plan);
                            self.intent = Some(track);
                        }
                        Err(e) => {
                            out.events.push(SupervisorEvent::BackendFailure { stage: "encircle".into(), error: e.to_string() });
                            self.plan = Some(Plan::Search(up.status));
                        }
                    }
                } else {
                    if let Some(r) = up.reference {
                        self.goal = r.clone();
                        self.reference = r;
                    }
                    self.plan = Some(Plan::Search(up.status));
                }
                out.verdict = Some(VerificationVerdict::consistent("search in progress"));
            }
        }
        self.approach(state);
        out.new_reference = (self.reference != before).then(|| self.reference.clone());
        out
    }

    /// Walks the enforced formation reference toward the goal by at most `approach_step` per drone.
    fn approach(&mut self, state: &SwarmState) {
        let Some(step) = self.config.approach_step.filter(|_| matches!(self.plan, Some(Plan::Formation(_)))) else {
            return;
        };
        self.reference = self
            .goal
            .iter()
            .zip(&state.drones)
            .map(|(g, p)| {
                let d = g - p;
                let n = d.norm();
                if n <= step { *g } else { p + d * (step / n) }
            })
            .collect();
    }

    fn check_formation(
        &mut self,
        current: Assignment,
        state: &SwarmState,
        backend: &mut dyn SupervisorBackend,
        out: &mut CheckOutcome,
    ) {
        let intent = self.intent.clone().expect("formation plan has an intent");
        let deterministic =
            verify_and_correct(&intent, state, &current, self.cooldown, &self.config, &mut BackendTemplates(backend));
        let (det, correction) = match deterministic {
            Ok(v) => v,
            Err(e) => {
                out.events.push(SupervisorEvent::BackendFailure { stage: "verify".into(), error: e.to_string() });
                return;
            }
        };
        let request = CheckRequest {
            cmd_text: &self.cmd_text,
            intent: &intent,
            feedback_csv: feedback_csv(&current.groups, state),
            deterministic: &det,
        };
        let mut verdict = match backend.check(&request) {
            Ok(v) => v,
            Err(e) => {
                out.events.push(SupervisorEvent::BackendFailure { stage: "check".into(), error: e.to_string() });
                return;
            }
        };
        let hard = det
            .failures
            .iter()
            .any(|f| matches!(f, CheckFailure::Structure { .. } | CheckFailure::Stale { .. }));
        if hard && verdict.consistent {
            verdict.consistent = false;
            verdict.reason = det.reason.clone();
        }
        verdict.failures = det.failures.clone();
        out.events.push(SupervisorEvent::Verdict {
            consistent: verdict.consistent,
            reason: verdict.reason.clone(),
            failures: verdict.failures.clone(),
            backend: backend.name().to_string(),
        });
        if verdict.consistent {
            verdict.corrected_reference = None;
            out.verdict = Some(verdict);
            return;
        }

        let corrected = match correction {
            Some(c) => Ok(c),
            None if intent.mode == Mode::Track => reground_tracking(
                &intent,
                state,
                &self.config,
                Some(&current),
                self.cooldown,
                Partitioning::Balanced,
                &mut BackendTemplates(backend),
            ),
            None => Ok(current.clone()),
        };
        let corrected = match corrected {
            Ok(c) => c,
            Err(e) => {
                out.events.push(SupervisorEvent::BackendFailure { stage: "correct".into(), error: e.to_string() });
                return;
            }
        };
        let (old, new) = (memberships(&current), memberships(&corrected));
        if current.split != corrected.split {
            let sizes = corrected.group_sizes();
            out.events.push(if corrected.split { SupervisorEvent::Split { sizes } } else { SupervisorEvent::Merge { sizes } });
        } else if old != new {
            out.events.push(SupervisorEvent::Rebalance { from: current.group_sizes(), to: corrected.group_sizes() });
            if corrected.split && self.config.cooldown_checks > 0 {
                self.cooldown = self.config.cooldown_checks;
            }
        }
        out.events.push(reground_event(intent.mode, &corrected));
        let reference = corrected.reference(state);
        verdict.corrected_reference = Some(reference.clone());
        self.goal = reference;
        self.reference = self.goal.clone();
        self.plan = Some(Plan::Formation(corrected));
        out.verdict = Some(verdict);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::RuleBackend;
    use crate::supervision::{GroupSpec, Shape};

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn hover_state() -> SwarmState {
        SwarmState::new(0.0, (0..4).map(|i| v(i as f64, 0.0, 5.0)).collect(), vec![v(0.0, 0.0, 0.0)])
    }

    #[test]
    fn command_applies_at_next_check_only() {
        let state = hover_state();
        let mut sup = Supervisor::new(SupervisorConfig::default(), &state);
        sup.submit(Command::Text("hover in a line".into()));
        assert_eq!(sup.pending(), 1);
        assert!(sup.intent().is_none());
        let out = sup.supervise(&state, &mut RuleBackend);
        assert!(out.command_applied);
        assert_eq!(sup.intent().unwrap().formation, Shape::Line);
        assert!(out.events.iter().any(|e| e.kind() == "command"));
    }

    #[test]
    fn rejected_command_leaves_state_untouched() {
        let state = hover_state();
        let mut sup = Supervisor::new(SupervisorConfig::default(), &state);
        sup.submit(Command::Text("hold a grid".into()));
        sup.supervise(&state, &mut RuleBackend);
        let before = sup.state_hash();
        let mut bad = Intent::track([7], Shape::Grid);
        bad.groups.push(GroupSpec::target(8));
        sup.submit(Command::Intent(bad));
        let out = sup.supervise(&state, &mut RuleBackend);
        assert!(!out.command_applied);
        assert!(out.events.iter().any(|e| e.kind() == "command_rejected"));
        assert_eq!(sup.intent().unwrap().mode, Mode::Stationary);
        assert_eq!(sup.state_hash(), before);
    }

    #[test]
    fn stale_track_reference_is_recentered() {
        let mut state = SwarmState::new(0.0, vec![v(0.0, 0.0, 8.0); 4], vec![v(0.0, 0.0, 0.0)]);
        let mut sup = Supervisor::new(SupervisorConfig::default(), &state);
        sup.submit(Command::Intent(Intent::track([0], Shape::Circle)));
        sup.supervise(&state, &mut RuleBackend);
        state.drones = sup.reference().to_vec();
        state.targets[0] = v(5.0, 0.0, 0.0);
        let out = sup.supervise(&state, &mut RuleBackend);
        let verdict = out.verdict.unwrap();
        assert!(!verdict.consistent);
        let shifted: Vec<Vec3> = state.drones.iter().map(|p| p + v(5.0, 0.0, 0.0)).collect();
        for (a, b) in out.new_reference.unwrap().iter().zip(&shifted) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn consistent_formation_produces_no_reference_change() {
        let mut state = hover_state();
        let mut sup = Supervisor::new(SupervisorConfig::default(), &state);
        sup.submit(Command::Text("hold a grid".into()));
        sup.supervise(&state, &mut RuleBackend);
        state.drones = sup.reference().to_vec();
        let out = sup.supervise(&state, &mut RuleBackend);
        assert!(out.verdict.unwrap().consistent);
        assert!(out.new_reference.is_none());
    }
}
