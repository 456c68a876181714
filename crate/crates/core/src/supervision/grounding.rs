use rand::Rng;
use serde::{Deserialize, Serialize};

use super::formation::{formation_offsets, mean, FormationTemplate};
use super::intent::{Intent, Mode, Shape};
use super::search::SearchStatus;
use super::{SupervisionError, SupervisorConfig};
use crate::dynamics::SwarmState;
use crate::Vec3;

/// Where templates come from: the built-in geometry or a backend.
pub trait TemplateSource {
    fn template(&mut self, shape: Shape, count: usize, spacing: f64, height: f64)
        -> Result<FormationTemplate, SupervisionError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinTemplates;

impl TemplateSource for BuiltinTemplates {
    fn template(&mut self, shape: Shape, count: usize, spacing: f64, height: f64) -> Result<FormationTemplate, SupervisionError> {
        formation_offsets(shape, count, spacing, height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupAnchor {
    Targets(Vec<usize>),
    World([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationGroup {
    pub anchor: GroupAnchor,
    pub shape: Shape,
    /// Drone ids in ascending order.
    pub members: Vec<usize>,
    /// Template slot held by each member.
    pub slots: Vec<usize>,
    pub template: Vec<Vec3>,
    /// Anchor position used when the group was grounded.
    pub center: Vec3,
    /// Enforced reference of each member.
    pub references: Vec<Vec3>,
}

impl FormationGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// RMS distance between members and their references after the best translation.
    pub fn shape_residual(&self, state: &SwarmState) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        let pos: Vec<Vec3> = self.members.iter().map(|&i| state.drones[i]).collect();
        let shift = mean(&pos) - mean(&self.references);
        let sq: f64 = pos.iter().zip(&self.references).map(|(p, r)| (p - r - shift).norm_squared()).sum();
        (sq / pos.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub groups: Vec<FormationGroup>,
    /// Drones outside every group, held where they were at grounding.
    pub held: Vec<(usize, Vec3)>,
    /// Tracking with one group per target rather than one convoy group.
    pub split: bool,
}

impl Assignment {
    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(FormationGroup::len).collect()
    }

    pub fn group_of(&self, drone: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.members.contains(&drone))
    }

    pub fn reference(&self, state: &SwarmState) -> Vec<Vec3> {
        let mut out = state.drones.clone();
        for (i, p) in &self.held {
            out[*i] = *p;
        }
        for g in &self.groups {
            for (&i, r) in g.members.iter().zip(&g.references) {
                out[i] = *r;
            }
        }
        out
    }

    fn anchors(&self) -> Vec<GroupAnchor> {
        self.groups.iter().map(|g| g.anchor.clone()).collect()
    }
}

/// Output of grounding an intent against the current swarm.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Formation(Assignment),
    Search(SearchStatus),
}

impl Plan {
    pub fn reference(&self, state: &SwarmState) -> Vec<Vec3> {
        match self {
            Plan::Formation(a) => a.reference(state),
            Plan::Search(s) => s.reference.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckFailure {
    /// Convoy versus per-target grouping no longer matches target separation.
    Structure { split: bool },
    Stale { group: usize, moved: f64 },
    Residual { group: usize, rms: f64 },
    Balance { sizes: Vec<usize> },
}

impl CheckFailure {
    fn describe(&self) -> String {
        match self {
            CheckFailure::Structure { split: true } => "targets separated beyond split threshold".into(),
            CheckFailure::Structure { split: false } => "targets regrouped within split threshold".into(),
            CheckFailure::Stale { group, moved } => format!("group {group} anchor moved {moved:.2} m since grounding"),
            CheckFailure::Residual { group, rms } => format!("group {group} shape residual {rms:.2} m"),
            CheckFailure::Balance { sizes } => format!("uneven group sizes {sizes:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub consistent: bool,
    pub reason: String,
    pub corrected_reference: Option<Vec<Vec3>>,
    #[serde(default)]
    pub failures: Vec<CheckFailure>,
}

impl VerificationVerdict {
    pub fn consistent(reason: impl Into<String>) -> Self {
        Self { consistent: true, reason: reason.into(), corrected_reference: None, failures: Vec::new() }
    }

    pub fn revise(reason: impl Into<String>) -> Self {
        Self { consistent: false, reason: reason.into(), corrected_reference: None, failures: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partitioning {
    /// Nearest-target split only.
    Local,
    /// Nearest-target split followed by quota rebalancing.
    Balanced,
}

fn target_positions(state: &SwarmState, ids: &[usize]) -> Vec<Vec3> {
    ids.iter().map(|&t| state.targets[t]).collect()
}

fn max_pairwise(points: &[Vec3]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}

fn horizontal_distance(a: &Vec3, b: &Vec3) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Each drone joins the group of its horizontally nearest anchor; ties go to the lower group.
pub fn partition_nearest(state: &SwarmState, drones: &[usize], anchors: &[Vec3]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); anchors.len()];
    for &i in drones {
        let p = state.drones[i];
        let best = (0..anchors.len())
            .min_by(|&a, &b| horizontal_distance(&p, &anchors[a]).total_cmp(&horizontal_distance(&p, &anchors[b])))
            .expect("at least one anchor");
        groups[best].push(i);
    }
    groups
}

/// Target group sizes; `None` when no sizing rule applies.
pub fn quotas(current: &[usize], total: usize, counts: &[Option<usize>], even_split: bool) -> Option<Vec<usize>> {
    let g = current.len();
    if g == 0 {
        return None;
    }
    if counts.len() == g && counts.iter().all(Option::is_some) {
        return Some(counts.iter().map(|c| c.unwrap_or(0)).collect());
    }
    if !even_split {
        return None;
    }
    let base = total / g;
    let extra = total % g;
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| current[b].cmp(&current[a]).then(a.cmp(&b)));
    let mut q = vec![base; g];
    for &k in order.iter().take(extra) {
        q[k] += 1;
    }
    Some(q)
}

/// Moves the farthest surplus drones into the nearest groups still below quota.
/// Drones beyond the total quota are returned separately.
pub fn rebalance(
    mut groups: Vec<Vec<usize>>,
    quota: &[usize],
    state: &SwarmState,
    anchors: &[Vec3],
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let dist = |i: usize, g: usize| horizontal_distance(&state.drones[i], &anchors[g]);
    loop {
        let deficit: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].len() < quota[g]).collect();
        if deficit.is_empty() {
            break;
        }
        let candidate = (0..groups.len())
            .filter(|&g| groups[g].len() > quota[g])
            .flat_map(|g| groups[g].iter().map(move |&i| (i, g)))
            .max_by(|a, b| dist(a.0, a.1).total_cmp(&dist(b.0, b.1)).then(b.0.cmp(&a.0)));
        let Some((drone, from)) = candidate else { break };
        let to = *deficit
            .iter()
            .min_by(|&&a, &&b| dist(drone, a).total_cmp(&dist(drone, b)).then(a.cmp(&b)))
            .expect("non-empty deficit");
        groups[from].retain(|&i| i != drone);
        groups[to].push(drone);
        groups[to].sort_unstable();
    }
    let mut dropped = Vec::new();
    for (g, members) in groups.iter_mut().enumerate() {
        while members.len() > quota[g] {
            let far = *members
                .iter()
                .max_by(|&&a, &&b| dist(a, g).total_cmp(&dist(b, g)).then(b.cmp(&a)))
                .expect("non-empty");
            members.retain(|&i| i != far);
            dropped.push(far);
        }
    }
    dropped.sort_unstable();
    (groups, dropped)
}

/// Greedy nearest-slot matching in drone-index order.
pub fn match_slots(state: &SwarmState, members: &[usize], center: &Vec3, template: &[Vec3]) -> Vec<usize> {
    let mut free = vec![true; template.len()];
    members
        .iter()
        .map(|&i| {
            let p = state.drones[i];
            let slot = (0..template.len())
                .filter(|&s| free[s])
                .min_by(|&a, &b| (center + template[a] - p).norm().total_cmp(&(center + template[b] - p).norm()))
                .expect("template has a slot per member");
            free[slot] = false;
            slot
        })
        .collect()
}

struct GroupDraft {
    anchor: GroupAnchor,
    center: Vec3,
    shape: Shape,
    height: f64,
    members: Vec<usize>,
    keep_slots: Option<(Vec<usize>, Vec<Vec3>)>,
}

fn finish_groups(
    drafts: Vec<GroupDraft>,
    intent: &Intent,
    state: &SwarmState,
    templates: &mut dyn TemplateSource,
) -> Result<Vec<FormationGroup>, SupervisionError> {
    let mut out = Vec::with_capacity(drafts.len());
    for d in drafts {
        let (slots, template) = match d.keep_slots {
            Some(kept) => kept,
            None if d.members.is_empty() => (Vec::new(), Vec::new()),
            None => {
                let t = templates.template(d.shape, d.members.len(), intent.spacing, d.height)?;
                if t.len() != d.members.len() {
                    return Err(SupervisionError::Template(format!(
                        "expected {} slots, got {}",
                        d.members.len(),
                        t.len()
                    )));
                }
                let slots = match_slots(state, &d.members, &d.center, &t.offsets);
                (slots, t.offsets)
            }
        };
        let references = slots
            .iter()
            .map(|&s| {
                let mut r = d.center + template[s];
                r.z = intent.clamp_altitude(r.z);
                r
            })
            .collect();
        out.push(FormationGroup {
            anchor: d.anchor,
            shape: d.shape,
            members: d.members,
            slots,
            template,
            center: d.center,
            references,
        });
    }
    Ok(out)
}

fn reusable_slots(prev: Option<&FormationGroup>, members: &[usize], shape: Shape) -> Option<(Vec<usize>, Vec<Vec3>)> {
    let p = prev?;
    (p.members == members && p.shape == shape).then(|| (p.slots.clone(), p.template.clone()))
}

/// Recomputes a tracking assignment from current target positions.
pub fn reground_tracking(
    intent: &Intent,
    state: &SwarmState,
    config: &SupervisorConfig,
    previous: Option<&Assignment>,
    cooldown_remaining: usize,
    partitioning: Partitioning,
    templates: &mut dyn TemplateSource,
) -> Result<Assignment, SupervisionError> {
    let tracked = intent.tracked_targets();
    if tracked.is_empty() {
        return Err(SupervisionError::Infeasible("no target referenced".into()));
    }
    if let Some(&bad) = tracked.iter().find(|&&t| t >= state.targets.len()) {
        return Err(SupervisionError::Infeasible(format!("target {bad} not visible")));
    }
    let positions = target_positions(state, &tracked);
    let split = tracked.len() > 1 && max_pairwise(&positions) > config.split_threshold;
    let all: Vec<usize> = (0..state.drones.len()).collect();
    let height = config.altitude;

    if !split {
        let anchor = GroupAnchor::Targets(tracked.clone());
        let center = mean(&positions);
        let prev = previous.filter(|p| !p.split && p.anchors() == vec![anchor.clone()]);
        let members = match prev {
            Some(p) => p.groups[0].members.clone(),
            None => all,
        };
        let held: Vec<(usize, Vec3)> = prev.map(|p| p.held.clone()).unwrap_or_default();
        let keep = reusable_slots(prev.map(|p| &p.groups[0]), &members, intent.formation);
        let drafts = vec![GroupDraft { anchor, center, shape: intent.formation, height, members, keep_slots: keep }];
        let groups = finish_groups(drafts, intent, state, templates)?;
        return Ok(Assignment { groups, held, split: false });
    }

    // one group per distinct tracked target, in the order the intent lists them
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (k, g) in intent.groups.iter().enumerate() {
        if let Some(t) = g.target {
            if !order.iter().any(|&(_, tt)| tt == t) {
                order.push((k, t));
            }
        }
    }
    let anchors: Vec<GroupAnchor> = order.iter().map(|&(_, t)| GroupAnchor::Targets(vec![t])).collect();
    let anchor_pos: Vec<Vec3> = order.iter().map(|&(_, t)| state.targets[t]).collect();
    let counts: Vec<Option<usize>> = order.iter().map(|&(k, _)| intent.groups[k].count).collect();

    let prev = previous.filter(|p| p.split && p.anchors() == anchors);
    let (members, held) = match prev {
        Some(p) => {
            let kept: Vec<Vec<usize>> = p.groups.iter().map(|g| g.members.clone()).collect();
            let sizes: Vec<usize> = kept.iter().map(Vec::len).collect();
            let total = state.drones.len() - p.held.len();
            let ok = match (partitioning, quotas(&sizes, total, &counts, intent.even_split)) {
                (Partitioning::Balanced, Some(q)) => q == sizes,
                _ => true,
            };
            if ok || cooldown_remaining > 0 {
                (kept, p.held.clone())
            } else {
                fresh_partition(state, &all, &anchor_pos, &counts, intent.even_split, partitioning)
            }
        }
        None => fresh_partition(state, &all, &anchor_pos, &counts, intent.even_split, partitioning),
    };

    let drafts = order
        .iter()
        .zip(anchors)
        .zip(members)
        .enumerate()
        .map(|(g, ((&(k, t), anchor), members))| {
            let shape = intent.group_shape(k);
            let keep = reusable_slots(prev.and_then(|p| p.groups.get(g)), &members, shape);
            GroupDraft { anchor, center: state.targets[t], shape, height, members, keep_slots: keep }
        })
        .collect();
    let groups = finish_groups(drafts, intent, state, templates)?;
    Ok(Assignment { groups, held, split: true })
}

fn fresh_partition(
    state: &SwarmState,
    drones: &[usize],
    anchors: &[Vec3],
    counts: &[Option<usize>],
    even_split: bool,
    partitioning: Partitioning,
) -> (Vec<Vec<usize>>, Vec<(usize, Vec3)>) {
    let groups = partition_nearest(state, drones, anchors);
    if partitioning == Partitioning::Local {
        return (groups, Vec::new());
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    match quotas(&sizes, drones.len(), counts, even_split) {
        Some(q) => {
            let (groups, dropped) = rebalance(groups, &q, state, anchors);
            (groups, dropped.into_iter().map(|i| (i, state.drones[i])).collect())
        }
        None => (groups, Vec::new()),
    }
}

fn ground_stationary(
    intent: &Intent,
    state: &SwarmState,
    previous: Option<&Assignment>,
    templates: &mut dyn TemplateSource,
) -> Result<Assignment, SupervisionError> {
    let n = state.drones.len();
    let all: Vec<usize> = (0..n).collect();
    let specs = &intent.groups;
    let centroid_of = |m: &[usize]| mean(&m.iter().map(|&i| state.drones[i]).collect::<Vec<_>>());

    let prev_groups: Option<Vec<Vec<usize>>> = previous
        .filter(|p| !p.groups.is_empty() && (specs.is_empty() || p.groups.len() == specs.len()))
        .map(|p| p.groups.iter().map(|g| g.members.clone()).collect());
    let held: Vec<(usize, Vec3)> = previous.filter(|_| prev_groups.is_some()).map(|p| p.held.clone()).unwrap_or_default();

    let spec_anchor = |k: usize| -> Option<Vec3> {
        let g = specs.get(k)?;
        g.anchor.map(Vec3::from).or_else(|| g.target.map(|t| state.targets[t]))
    };

    let partition: Vec<Vec<usize>> = match prev_groups {
        Some(p) => p,
        None if specs.is_empty() => vec![all.clone()],
        None => {
            let counts: Vec<Option<usize>> = specs.iter().map(|g| g.count).collect();
            let anchors: Option<Vec<Vec3>> = (0..specs.len()).map(spec_anchor).collect();
            match anchors {
                Some(a) => {
                    let near = partition_nearest(state, &all, &a);
                    let sizes: Vec<usize> = near.iter().map(Vec::len).collect();
                    match quotas(&sizes, n, &counts, true) {
                        Some(q) => rebalance(near, &q, state, &a).0,
                        None => near,
                    }
                }
                None => {
                    let sizes = vec![0; specs.len()];
                    let q = quotas(&sizes, n, &counts, true).expect("groups present");
                    let mut it = all.iter().copied();
                    q.iter().map(|&c| it.by_ref().take(c).collect()).collect()
                }
            }
        }
    };

    let drafts: Vec<GroupDraft> = partition
        .into_iter()
        .enumerate()
        .map(|(k, members)| {
            let center = spec_anchor(k).unwrap_or_else(|| centroid_of(&members));
            let shape = intent.group_shape(k);
            GroupDraft {
                anchor: GroupAnchor::World([center.x, center.y, center.z]),
                center,
                shape,
                height: 0.0,
                members,
                keep_slots: None,
            }
        })
        .collect();
    let groups = finish_groups(drafts, intent, state, templates)?;
    Ok(Assignment { groups, held, split: false })
}

/// Turns an intent into a concrete plan for the current swarm.
pub fn ground_intent<R: Rng>(
    intent: &Intent,
    state: &SwarmState,
    config: &SupervisorConfig,
    previous: Option<&Assignment>,
    templates: &mut dyn TemplateSource,
    rng: &mut R,
) -> Result<Plan, SupervisionError> {
    let nodes = crate::graph::NodeSet::new(state.drones.len(), state.targets.len(), 3)
        .map_err(|e| SupervisionError::Infeasible(e.to_string()))?;
    let mut intent = intent.clone();
    if intent.mode == Mode::Search {
        intent.search_region = intent.search_region.or(config.default_search_region);
        intent.search_target = intent.search_target.or(config.search_target);
    }
    intent.check_feasible(&nodes)?;
    match intent.mode {
        Mode::Track => reground_tracking(&intent, state, config, previous, 0, Partitioning::Balanced, templates)
            .map(Plan::Formation),
        Mode::Stationary => ground_stationary(&intent, state, previous, templates).map(Plan::Formation),
        Mode::Search => SearchStatus::start(&intent, state, config, rng).map(Plan::Search),
    }
}

/// Deterministic verification at a supervision instant, with the corrected assignment when needed.
pub fn verify_and_correct(
    intent: &Intent,
    state: &SwarmState,
    assignment: &Assignment,
    cooldown_remaining: usize,
    config: &SupervisorConfig,
    templates: &mut dyn TemplateSource,
) -> Result<(VerificationVerdict, Option<Assignment>), SupervisionError> {
    let mut failures = Vec::new();
    let mut structural = false;
    if intent.mode == Mode::Track {
        let tracked = intent.tracked_targets();
        let positions = target_positions(state, &tracked);
        let split = tracked.len() > 1 && max_pairwise(&positions) > config.split_threshold;
        if split != assignment.split {
            failures.push(CheckFailure::Structure { split });
            structural = true;
        }
        for (g, group) in assignment.groups.iter().enumerate() {
            if let GroupAnchor::Targets(ids) = &group.anchor {
                let now = mean(&target_positions(state, ids));
                let moved = (now - group.center).norm();
                if moved > config.staleness_tolerance {
                    failures.push(CheckFailure::Stale { group: g, moved });
                }
            }
        }
    }
    for (g, group) in assignment.groups.iter().enumerate() {
        let rms = group.shape_residual(state);
        if rms > config.residual_factor * intent.spacing {
            failures.push(CheckFailure::Residual { group: g, rms });
        }
    }
    if intent.even_split && assignment.groups.len() > 1 {
        let sizes = observed_sizes(state, assignment);
        let lo = sizes.iter().min().copied().unwrap_or(0);
        let hi = sizes.iter().max().copied().unwrap_or(0);
        if hi - lo > 1 {
            failures.push(CheckFailure::Balance { sizes });
        }
    }
    if failures.is_empty() {
        return Ok((VerificationVerdict::consistent("execution matches stored command"), None));
    }
    let reason = failures.iter().map(CheckFailure::describe).collect::<Vec<_>>().join("; ");
    let corrected = match intent.mode {
        Mode::Track => {
            let partitioning = if structural && assignment.groups.len() <= 1 {
                Partitioning::Local
            } else {
                Partitioning::Balanced
            };
            reground_tracking(intent, state, config, Some(assignment), cooldown_remaining, partitioning, templates)?
        }
        _ => assignment.clone(),
    };
    let verdict = VerificationVerdict {
        consistent: false,
        reason,
        corrected_reference: Some(corrected.reference(state)),
        failures,
    };
    Ok((verdict, Some(corrected)))
}

/// Group sizes as seen from where drones are: each drone counts toward its nearest group anchor.
pub fn observed_sizes(state: &SwarmState, assignment: &Assignment) -> Vec<usize> {
    let anchors: Vec<Vec3> = assignment.groups.iter().map(|g| g.center).collect();
    let members: Vec<usize> = assignment.groups.iter().flat_map(|g| g.members.iter().copied()).collect();
    partition_nearest(state, &members, &anchors).iter().map(Vec::len).collect()
}
