//! The six built-in missions: three pursuits and three searches.

use super::{ScenarioConfig, ScenarioError, ScheduledCommand, SpawnBox};
use crate::dynamics::{DisturbanceModel, Leg, TargetScript};
use crate::supervision::{Command, RegionExpansion, SearchRegion, SupervisorConfig};

const CHASE_DRONES: usize = 24;
const SAR_DRONES: usize = 8;

fn mv(to: [f64; 3], speed: f64) -> Leg {
    Leg::Move { to, speed }
}

fn car(start: [f64; 3], legs: Vec<Leg>) -> TargetScript {
    TargetScript { start, legs }
}

/// Three cars drive east together, then fork at the intersection `(30, 0)`.
fn forking_cars() -> Vec<TargetScript> {
    vec![
        car([0.0, 3.0, 0.0], vec![mv([30.0, 3.0, 0.0], 2.0), mv([45.0, 40.0, 0.0], 3.0), mv([50.0, 75.0, 0.0], 3.0)]),
        car([0.0, 0.0, 0.0], vec![mv([30.0, 0.0, 0.0], 2.0), mv([100.0, 0.0, 0.0], 3.0)]),
        car([0.0, -3.0, 0.0], vec![mv([30.0, -3.0, 0.0], 2.0), mv([50.0, -40.0, 0.0], 3.0), mv([55.0, -70.0, 0.0], 3.0)]),
    ]
}

/// Fork, U-turn back to the intersection, then leave together heading north.
fn u_turn_cars() -> Vec<TargetScript> {
    let merge = |y: f64| vec![mv([30.0 + y, 30.0, 0.0], 2.5), mv([30.0 + y, 80.0, 0.0], 2.0)];
    let mut out = Vec::new();
    for (y, branch) in [(3.0, [45.0, 35.0, 0.0]), (0.0, [70.0, 0.0, 0.0]), (-3.0, [45.0, -35.0, 0.0])] {
        let mut legs = vec![mv([30.0, y, 0.0], 2.0), mv(branch, 3.0), Leg::Wait { wait: 2.0 }, mv([30.0, y, 0.0], 3.0)];
        legs.extend(merge(y));
        out.push(car([0.0, y, 0.0], legs));
    }
    out
}

fn chase(name: &str, description: &str, targets: Vec<TargetScript>, duration: f64, commands: Vec<ScheduledCommand>) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        seed: 7,
        num_drones: CHASE_DRONES,
        drone_start: None,
        spawn: Some(SpawnBox { min: [-14.0, -14.0, 4.0], max: [14.0, 14.0, 10.0] }),
        targets,
        observation_radius: 25.0,
        check_interval: 1.0,
        dt: 0.01,
        duration,
        log_every: 10,
        disturbance: DisturbanceModel::noise(0.05, 7),
        initial_command: None,
        commands,
        supervisor: SupervisorConfig { split_threshold: 20.0, cooldown_checks: 1, seed: 7, ..SupervisorConfig::default() },
    }
}

fn sar(
    name: &str,
    description: &str,
    person: [f64; 3],
    region: SearchRegion,
    radius: f64,
    expansion: Option<RegionExpansion>,
    command: &str,
    duration: f64,
) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        seed: 7,
        num_drones: SAR_DRONES,
        drone_start: Some((0..SAR_DRONES).map(|i| [2.0 + 1.5 * (i % 4) as f64, 1.5 * (i / 4) as f64 - 0.75, 8.0]).collect()),
        spawn: None,
        targets: vec![TargetScript::stationary([0.0, 0.0, 0.0]), TargetScript::stationary(person)],
        observation_radius: radius,
        check_interval: 1.0,
        dt: 0.01,
        duration,
        log_every: 10,
        disturbance: DisturbanceModel::noise(0.02, 7),
        initial_command: None,
        commands: vec![ScheduledCommand::text(0.0, command)],
        supervisor: SupervisorConfig {
            default_search_region: Some(region),
            search_target: Some(1),
            region_expansion: expansion,
            arrival_radius: 1.5,
            approach_step: Some(0.4 * radius),
            seed: 7,
            ..SupervisorConfig::default()
        },
    }
}

pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    vec![
        chase(
            "chase-1",
            "Convoy grid, automatic split and rebalance, then per-group circle/square/cross.",
            forking_cars(),
            60.0,
            vec![
                ScheduledCommand::text(0.0, "Follow the group of cars in a grid formation and keep the groups balanced."),
                ScheduledCommand::text(45.0, "One group forms a circle, one forms a square, and one forms a cross."),
            ],
        ),
        chase(
            "chase-2",
            "Circle dragnet over three diverging suspects, then tracking is stopped.",
            forking_cars(),
            60.0,
            vec![
                ScheduledCommand::text(
                    0.0,
                    "Three suspects are attempting to escape. Form a circle like a coordinated police dragnet and track all three targets.",
                ),
                ScheduledCommand::text(45.0, "Stop tracking all the targets."),
            ],
        ),
        chase(
            "chase-3",
            "Circle tracking through a fork, U-turns and a re-merge onto a common road.",
            u_turn_cars(),
            90.0,
            vec![ScheduledCommand::text(0.0, "Track all three cars in circle formations, evenly split.")],
        ),
        sar(
            "sar-1",
            "Waypoint search of a forest box; encirclement on detection.",
            [44.0, 14.0, 0.0],
            SearchRegion::new([10.0, -20.0, 8.0], [50.0, 20.0, 8.0]),
            20.0,
            None,
            "Explore the forest region for the missing person and encircle them when found.",
            120.0,
        ),
        sar(
            "sar-2",
            "Waypoint search with the person elsewhere; cube formation on detection.",
            [46.0, -17.0, 0.0],
            SearchRegion::new([10.0, -20.0, 8.0], [50.0, 20.0, 8.0]),
            20.0,
            None,
            "Search the area for the missing person and form a cube around them once found.",
            120.0,
        ),
        sar(
            "sar-3",
            "Person outside the initial box; the supervisor grows the region after repeated all-clear rounds.",
            [30.0, -32.0, 0.0],
            SearchRegion::new([10.0, -10.0, 8.0], [30.0, 10.0, 8.0]),
            20.0,
            Some(RegionExpansion { rounds: 5, factor: 1.5 }),
            "Patrol the search area for the missing person and encircle them when found.",
            240.0,
        ),
    ]
}

pub fn scenario(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    builtin_scenarios().into_iter().find(|c| c.name == name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))
}

/// A stationary single-group mission, handy for tests and demos.
pub fn hover(num_drones: usize, command: Command) -> ScenarioConfig {
    ScenarioConfig {
        name: "hover".into(),
        description: "Drones around a parked car form a stationary shape.".into(),
        seed: 1,
        num_drones,
        drone_start: None,
        spawn: Some(SpawnBox { min: [-4.0, -4.0, 4.0], max: [4.0, 4.0, 6.0] }),
        targets: vec![TargetScript::stationary([0.0, 0.0, 0.0])],
        observation_radius: 15.0,
        check_interval: 1.0,
        dt: 0.01,
        duration: 10.0,
        log_every: 10,
        disturbance: DisturbanceModel::none(),
        initial_command: Some(command),
        commands: Vec::new(),
        supervisor: SupervisorConfig { seed: 1, ..SupervisorConfig::default() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_valid_missions() {
        let all = builtin_scenarios();
        assert_eq!(all.len(), 6);
        for c in &all {
            c.validate().unwrap();
        }
        let c1 = scenario("chase-1").unwrap();
        assert_eq!((c1.num_drones, c1.targets.len()), (24, 3));
        assert_eq!(scenario("sar-2").unwrap().num_drones, 8);
        assert!(scenario("nope").is_err());
    }

    #[test]
    fn chase_three_turns_back() {
        let c = scenario("chase-3").unwrap();
        let m = c.motion();
        let (a, b, end) = (m.positions_at(10.0), m.positions_at(32.0), m.positions_at(c.duration));
        let spread = |p: &[crate::Vec3]| (p[0] - p[2]).norm();
        assert!(spread(&a) < 10.0 && spread(&b) > 40.0 && spread(&end) < 10.0);
    }
}
