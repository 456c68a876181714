use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SupervisionError;
use crate::graph::NodeSet;
use crate::Vec3;

pub const DEFAULT_SPACING: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stationary,
    Track,
    Search,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Stationary => "stationary",
            Mode::Track => "track",
            Mode::Search => "search",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Grid,
    Circle,
    Square,
    Cross,
    Line,
    Cube,
    Spiral,
}

impl Shape {
    pub const ALL: [Shape; 7] =
        [Shape::Grid, Shape::Circle, Shape::Square, Shape::Cross, Shape::Line, Shape::Cube, Shape::Spiral];

    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Grid => "grid",
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Cross => "cross",
            Shape::Line => "line",
            Shape::Cube => "cube",
            Shape::Spiral => "spiral",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Shape {
    type Err = SupervisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Shape::ALL
            .into_iter()
            .find(|shape| shape.as_str() == key)
            .ok_or(SupervisionError::UnsupportedShape(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SearchRegion {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|c| self.min[c].is_finite() && self.max[c].is_finite() && self.min[c] <= self.max[c])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|c| p[c] >= self.min[c] && p[c] <= self.max[c])
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    /// Scales the horizontal extents about the center; the altitude range is kept.
    pub fn expanded(&self, factor: f64) -> Self {
        let c = self.center();
        let mut out = *self;
        for axis in 0..2 {
            let half = 0.5 * (self.max[axis] - self.min[axis]) * factor;
            out.min[axis] = c[axis] - half;
            out.max[axis] = c[axis] + half;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formation: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl GroupSpec {
    pub fn target(id: usize) -> Self {
        Self { target: Some(id), ..Self::default() }
    }

    pub fn with_formation(mut self, shape: Shape) -> Self {
        self.formation = Some(shape);
        self
    }
}

/// Stored command: reference type, grouping and formation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntentWire")]
pub struct Intent {
    pub mode: Mode,
    pub tracking: bool,
    pub groups: Vec<GroupSpec>,
    pub formation: Shape,
    pub even_split: bool,
    pub spacing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub altitude_band: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_region: Option<SearchRegion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_target: Option<usize>,
}

impl Intent {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            tracking: mode == Mode::Track,
            groups: Vec::new(),
            formation: Shape::Grid,
            even_split: false,
            spacing: DEFAULT_SPACING,
            altitude_band: None,
            search_region: None,
            search_target: None,
        }
    }

    pub fn track(targets: impl IntoIterator<Item = usize>, formation: Shape) -> Self {
        let mut intent = Self::new(Mode::Track);
        intent.groups = targets.into_iter().map(GroupSpec::target).collect();
        intent.formation = formation;
        intent
    }

    pub fn search(region: SearchRegion, formation: Shape) -> Self {
        let mut intent = Self::new(Mode::Search);
        intent.search_region = Some(region);
        intent.formation = formation;
        intent
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("intent serializes")
    }

    pub fn tracked_targets(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.groups.iter().filter_map(|g| g.target).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn group_shape(&self, index: usize) -> Shape {
        self.groups.get(index).and_then(|g| g.formation).unwrap_or(self.formation)
    }

    /// Structural checks that do not depend on the swarm.
    pub fn check_form(&self) -> Result<(), SupervisionError> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(SupervisionError::InvalidIntent(format!("spacing must be positive, got {}", self.spacing)));
        }
        if self.tracking != (self.mode == Mode::Track) {
            return Err(SupervisionError::InvalidIntent(format!(
                "tracking={} inconsistent with mode {}",
                self.tracking, self.mode
            )));
        }
        if self.mode == Mode::Track && self.tracked_targets().is_empty() {
            return Err(SupervisionError::InvalidIntent("track mode references no target".into()));
        }
        if let Some(region) = &self.search_region {
            if !region.is_valid() {
                return Err(SupervisionError::InvalidIntent("search region is empty or non-finite".into()));
            }
        }
        if let Some((lo, hi)) = self.altitude_band {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SupervisionError::InvalidIntent(format!("altitude band ({lo}, {hi}) is empty")));
            }
        }
        for g in &self.groups {
            if g.count == Some(0) {
                return Err(SupervisionError::InvalidIntent("group with zero drones".into()));
            }
            if let Some(a) = g.anchor {
                if a.iter().any(|c| !c.is_finite()) {
                    return Err(SupervisionError::InvalidIntent("non-finite group anchor".into()));
                }
            }
        }
        Ok(())
    }

    /// Checks against a concrete swarm; failure means the intent is infeasible.
    pub fn check_feasible(&self, nodes: &NodeSet) -> Result<(), SupervisionError> {
        self.check_form()?;
        let requested: usize = self.groups.iter().filter_map(|g| g.count).sum();
        if requested > nodes.num_drones {
            return Err(SupervisionError::Infeasible(format!(
                "groups request {requested} drones, only {} available",
                nodes.num_drones
            )));
        }
        if let Some(bad) = self.tracked_targets().into_iter().find(|&t| t >= nodes.num_targets) {
            return Err(SupervisionError::Infeasible(format!(
                "target {bad} not present ({} targets visible)",
                nodes.num_targets
            )));
        }
        if let Some(t) = self.search_target {
            if t >= nodes.num_targets {
                return Err(SupervisionError::Infeasible(format!("search target {t} not present")));
            }
        }
        if self.mode == Mode::Search && self.search_region.is_none() {
            return Err(SupervisionError::Infeasible("search mode without a search region".into()));
        }
        Ok(())
    }

    pub fn clamp_altitude(&self, z: f64) -> f64 {
        match self.altitude_band {
            Some((lo, hi)) => z.clamp(lo, hi),
            None => z,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GroupWire {
    Index(usize),
    Name(String),
    Spec(GroupSpec),
}

impl TryFrom<GroupWire> for GroupSpec {
    type Error = String;

    fn try_from(g: GroupWire) -> Result<Self, String> {
        match g {
            GroupWire::Index(i) => Ok(GroupSpec::target(i)),
            GroupWire::Spec(spec) => Ok(spec),
            GroupWire::Name(name) => {
                let digits = name.trim_start_matches(|c: char| !c.is_ascii_digit());
                match digits.parse::<usize>() {
                    Ok(n) if n >= 1 => Ok(GroupSpec::target(n - 1)),
                    _ => Err(format!("group name {name:?} does not end in a 1-based target number")),
                }
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentWire {
    mode: Option<Mode>,
    tracking: Option<bool>,
    #[serde(default)]
    groups: Vec<GroupWire>,
    formation: Option<String>,
    even_split: Option<bool>,
    spacing: Option<f64>,
    altitude_band: Option<(f64, f64)>,
    search_region: Option<SearchRegion>,
    search_target: Option<usize>,
}

impl TryFrom<IntentWire> for Intent {
    type Error = String;

    fn try_from(w: IntentWire) -> Result<Self, String> {
        let mode = w.mode.ok_or("missing field `mode`")?;
        let formation = match w.formation {
            Some(name) => name.parse::<Shape>().map_err(|e| e.to_string())?,
            None => Shape::Grid,
        };
        let groups = w.groups.into_iter().map(GroupSpec::try_from).collect::<Result<Vec<_>, _>>()?;
        let intent = Intent {
            mode,
            tracking: w.tracking.unwrap_or(mode == Mode::Track),
            groups,
            formation,
            even_split: w.even_split.unwrap_or(false),
            spacing: w.spacing.unwrap_or(DEFAULT_SPACING),
            altitude_band: w.altitude_band,
            search_region: w.search_region,
            search_target: w.search_target,
        };
        intent.check_form().map_err(|e| e.to_string())?;
        Ok(intent)
    }
}
