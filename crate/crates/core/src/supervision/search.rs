use rand::Rng;
use serde::{Deserialize, Serialize};

use super::intent::{GroupSpec, Intent, Mode, SearchRegion};
use super::{SupervisionError, SupervisorConfig};
use crate::dynamics::SwarmState;
use crate::Vec3;

const CORRIDOR_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPhase {
    Enroute,
    /// At its waypoint, waiting for a valid new one.
    Scanning,
    /// Cleared a waypoint at this check and received a new one.
    Cleared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub target: usize,
    pub position: Vec3,
    pub drone: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStatus {
    pub region: SearchRegion,
    pub waypoints: Vec<Option<Vec3>>,
    pub phases: Vec<SearchPhase>,
    /// Enforced drone reference.
    pub reference: Vec<Vec3>,
    pub detection: Option<Detection>,
    pub cleared_waypoints: usize,
    pub issued_waypoints: usize,
    /// Waypoints issued after a clearance, before any detection.
    pub reassignments: usize,
    pub clear_rounds: usize,
    pub round_progress: usize,
    pub expansions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SearchEvent {
    Waypoint { drone: usize, waypoint: Vec3 },
    Cleared { drone: usize, waypoint: Vec3 },
    Detected(Detection),
    RegionExpanded { region: SearchRegion },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchUpdate {
    pub status: SearchStatus,
    pub reference: Option<Vec<Vec3>>,
    /// Track intent to adopt after a detection.
    pub switch_to: Option<Intent>,
    pub events: Vec<SearchEvent>,
}

fn anchors(state: &SwarmState, search_target: Option<usize>) -> Vec<Vec3> {
    state
        .targets
        .iter()
        .enumerate()
        .filter(|&(t, _)| Some(t) != search_target)
        .map(|(_, p)| *p)
        .collect()
}

/// Every point reaches an anchor through hops no longer than `reach`.
fn anchored(points: &[Vec3], roots: &[Vec3], reach: f64) -> bool {
    let mut reached = vec![false; points.len()];
    let mut frontier: Vec<Vec3> = roots.to_vec();
    while let Some(p) = frontier.pop() {
        for (k, q) in points.iter().enumerate() {
            if !reached[k] && (p - q).norm() <= reach {
                reached[k] = true;
                frontier.push(*q);
            }
        }
    }
    reached.into_iter().all(|r| r)
}

fn sample_in<R: Rng>(region: &SearchRegion, rng: &mut R) -> Vec3 {
    let mut p = Vec3::zeros();
    for c in 0..3 {
        p[c] = if region.min[c] < region.max[c] { rng.random_range(region.min[c]..=region.max[c]) } else { region.min[c] };
    }
    p
}

/// Draws a waypoint for `drone` that keeps the relay chain and the transit corridor intact.
fn draw_waypoint<R: Rng>(
    drone: usize,
    status: &SearchStatus,
    state: &SwarmState,
    roots: &[Vec3],
    config: &SupervisorConfig,
    rng: &mut R,
) -> Option<Vec3> {
    let relay = config.relay_fraction * config.observation_radius;
    let corridor = config.corridor_fraction * config.observation_radius;
    let others: Vec<Vec3> = (0..state.drones.len())
        .filter(|&j| j != drone)
        .map(|j| status.waypoints[j].unwrap_or(state.drones[j]))
        .collect();
    let support: Vec<Vec3> = others.iter().chain(roots).copied().collect();
    let from = state.drones[drone];
    for _ in 0..config.waypoint_tries {
        let cand = sample_in(&status.region, rng);
        let mut pts = others.clone();
        pts.push(cand);
        if !anchored(&pts, roots, relay) {
            continue;
        }
        let covered = (0..=CORRIDOR_SAMPLES).all(|s| {
            let x = from + (cand - from) * (s as f64 / CORRIDOR_SAMPLES as f64);
            support.iter().any(|q| (x - q).norm() <= corridor)
        });
        if covered {
            return Some(cand);
        }
    }
    None
}

impl SearchStatus {
    /// Initial waypoint assignment, one drone at a time.
    pub fn start<R: Rng>(
        intent: &Intent,
        state: &SwarmState,
        config: &SupervisorConfig,
        rng: &mut R,
    ) -> Result<Self, SupervisionError> {
        let region = intent
            .search_region
            .or(config.default_search_region)
            .ok_or_else(|| SupervisionError::Infeasible("search mode without a search region".into()))?;
        let n = state.drones.len();
        let mut status = SearchStatus {
            region,
            waypoints: vec![None; n],
            phases: vec![SearchPhase::Scanning; n],
            reference: state.drones.clone(),
            detection: None,
            cleared_waypoints: 0,
            issued_waypoints: 0,
            reassignments: 0,
            clear_rounds: 0,
            round_progress: 0,
            expansions: 0,
        };
        let roots = anchors(state, intent.search_target.or(config.search_target));
        for i in 0..n {
            if let Some(w) = draw_waypoint(i, &status, state, &roots, config, rng) {
                status.waypoints[i] = Some(w);
                status.reference[i] = w;
                status.phases[i] = SearchPhase::Enroute;
                status.issued_waypoints += 1;
            }
        }
        Ok(status)
    }
}

/// One supervision step of the search state machine.
pub fn search_tick<R: Rng>(
    status: &SearchStatus,
    intent: &Intent,
    state: &SwarmState,
    config: &SupervisorConfig,
    rng: &mut R,
) -> SearchUpdate {
    let mut next = status.clone();
    let mut events = Vec::new();
    if status.detection.is_some() {
        return SearchUpdate { status: next, reference: None, switch_to: None, events };
    }
    let sought = intent.search_target.or(config.search_target);
    if let Some(t) = sought.filter(|&t| t < state.targets.len()) {
        let person = state.targets[t];
        let spotter = state
            .drones
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - person).norm()))
            .filter(|&(_, d)| d <= config.observation_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((drone, _)) = spotter {
            let detection = Detection { target: t, position: person, drone, time: state.time };
            next.detection = Some(detection);
            events.push(SearchEvent::Detected(detection));
            let mut track = Intent::new(Mode::Track);
            track.groups = vec![GroupSpec::target(t)];
            track.formation = intent.formation;
            track.spacing = intent.spacing;
            track.altitude_band = intent.altitude_band;
            return SearchUpdate { status: next, reference: None, switch_to: Some(track), events };
        }
    }

    let roots = anchors(state, sought);
    let mut changed = false;
    for i in 0..state.drones.len() {
        let arrived = match next.waypoints[i] {
            Some(w) => (state.drones[i] - w).norm() <= config.arrival_radius,
            None => true,
        };
        if !arrived {
            next.phases[i] = SearchPhase::Enroute;
            continue;
        }
        if let Some(w) = next.waypoints[i] {
            next.cleared_waypoints += 1;
            next.round_progress += 1;
            events.push(SearchEvent::Cleared { drone: i, waypoint: w });
            if next.round_progress >= state.drones.len() {
                next.round_progress = 0;
                next.clear_rounds += 1;
                if let Some(exp) = config.region_expansion {
                    if next.clear_rounds >= exp.rounds {
                        next.region = next.region.expanded(exp.factor);
                        next.clear_rounds = 0;
                        next.expansions += 1;
                        events.push(SearchEvent::RegionExpanded { region: next.region });
                    }
                }
            }
        }
        match draw_waypoint(i, &next, state, &roots, config, rng) {
            Some(w) => {
                if next.waypoints[i].is_some() {
                    next.reassignments += 1;
                }
                next.waypoints[i] = Some(w);
                next.reference[i] = w;
                next.phases[i] = SearchPhase::Cleared;
                next.issued_waypoints += 1;
                events.push(SearchEvent::Waypoint { drone: i, waypoint: w });
                changed = true;
            }
            None => {
                next.waypoints[i] = None;
                next.reference[i] = status.reference[i];
                next.phases[i] = SearchPhase::Scanning;
            }
        }
    }
    let reference = changed.then(|| next.reference.clone());
    SearchUpdate { status: next, reference, switch_to: None, events }
}
