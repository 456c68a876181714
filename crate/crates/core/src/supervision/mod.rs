//! Outer and middle layers: stored intent, formation templates, verification
//! with correction, tracking re-grounding and range-limited search.

pub mod formation;
pub mod grounding;
pub mod intent;
pub mod search;
pub mod supervisor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formation::{formation_offsets, FormationTemplate};
pub use grounding::{
    ground_intent, reground_tracking, verify_and_correct, Assignment, BuiltinTemplates, CheckFailure, FormationGroup,
    GroupAnchor, Partitioning, Plan, TemplateSource, VerificationVerdict,
};
pub use intent::{GroupSpec, Intent, Mode, SearchRegion, Shape};
pub use search::{search_tick, Detection, SearchPhase, SearchStatus, SearchUpdate};
pub use supervisor::{CheckOutcome, Command, GroupSummary, Supervisor, SupervisorEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisionError {
    #[error("unsupported formation shape {0:?}")]
    UnsupportedShape(String),
    #[error("formation needs at least one drone")]
    EmptyFormation,
    #[error("invalid intent: {0}")]
    InvalidIntent(String),
    #[error("infeasible intent: {0}")]
    Infeasible(String),
    #[error("template source failed: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionExpansion {
    /// Consecutive all-clear rounds before the region grows.
    pub rounds: usize,
    pub factor: f64,
}

impl Default for RegionExpansion {
    fn default() -> Self {
        Self { rounds: 3, factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorConfig {
    pub split_threshold: f64,
    pub cooldown_checks: usize,
    pub arrival_radius: f64,
    /// Shape residual threshold as a multiple of the intent spacing.
    pub residual_factor: f64,
    /// Target displacement since grounding that marks a reference as stale.
    pub staleness_tolerance: f64,
    /// Formation height above the tracked targets.
    pub altitude: f64,
    pub observation_radius: f64,
    /// Waypoint graph plus anchors must stay connected at this fraction of the radius.
    pub relay_fraction: f64,
    /// Every point of a transit leg must lie within this fraction of the radius of a waypoint or anchor.
    pub corridor_fraction: f64,
    pub waypoint_tries: usize,
    /// Caps how far a formation reference may lead each drone; the rest is issued at later checks.
    pub approach_step: Option<f64>,
    pub region_expansion: Option<RegionExpansion>,
    pub default_search_region: Option<SearchRegion>,
    pub search_target: Option<usize>,
    pub seed: u64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            split_threshold: 20.0,
            cooldown_checks: 2,
            arrival_radius: 1.0,
            residual_factor: 0.5,
            staleness_tolerance: 0.1,
            altitude: 8.0,
            observation_radius: 15.0,
            relay_fraction: 0.6,
            corridor_fraction: 0.8,
            waypoint_tries: 64,
            approach_step: None,
            region_expansion: None,
            default_search_region: None,
            search_target: None,
            seed: 0,
        }
    }
}
