//! Disturbed single-integrator swarm under distributed edge-error feedback.
//!
//! Edge vectors are stored one `Vec3` per edge, in the graph's edge order.
//! For planar node sets the z components stay at zero.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::InteractionGraph;
use crate::Vec3;

/// Relative tolerance for the two algebraic forms of the exogenous input.
pub const EXOGENOUS_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite state after step at node {index}")]
    NonFinite { index: usize },
    #[error("exogenous input forms disagree by {gap:e}")]
    Inconsistent { gap: f64 },
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("expected {expected} entries, got {got}")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub time: f64,
    pub drones: Vec<Vec3>,
    pub targets: Vec<Vec3>,
}

impl SwarmState {
    pub fn new(time: f64, drones: Vec<Vec3>, targets: Vec<Vec3>) -> Self {
        Self { time, drones, targets }
    }

    /// Stacked `[p_a; p_b]`.
    pub fn positions(&self) -> Vec<Vec3> {
        self.drones.iter().chain(self.targets.iter()).copied().collect()
    }

    pub fn position(&self, node: usize) -> Vec3 {
        if node < self.drones.len() {
            self.drones[node]
        } else {
            self.targets[node - self.drones.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignal {
    pub drones: Vec<Vec3>,
    pub valid_from: f64,
    pub jump_magnitude: f64,
}

impl ReferenceSignal {
    pub fn hold(drones: Vec<Vec3>, valid_from: f64) -> Self {
        Self { drones, valid_from, jump_magnitude: 0.0 }
    }

    /// Node reference `p^r`; targets reference their own current position.
    pub fn node_reference(&self, state: &SwarmState, node: usize) -> Vec3 {
        if node < self.drones.len() {
            self.drones[node]
        } else {
            state.targets[node - self.drones.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceKind {
    None,
    /// Same vector on every drone, stacked norm clipped to the bound.
    Constant { per_drone: [f64; 3] },
    /// Per-drone sinusoid with phase offset by drone index.
    Sinusoidal { amplitude: [f64; 3], period: f64 },
    /// Uniform direction in the stacked drone space, magnitude equal to the bound.
    BoundedNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel {
    #[serde(flatten)]
    pub kind: DisturbanceKind,
    /// Bound on the stacked drone disturbance norm.
    pub bound: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DisturbanceModel {
    pub fn none() -> Self {
        Self { kind: DisturbanceKind::None, bound: 0.0, seed: 0 }
    }

    pub fn noise(bound: f64, seed: u64) -> Self {
        Self { kind: DisturbanceKind::BoundedNoise, bound, seed }
    }

    pub fn sampler(&self, num_drones: usize, dim: usize) -> DisturbanceSampler {
        DisturbanceSampler {
            model: self.clone(),
            num_drones,
            dim,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DisturbanceSampler {
    model: DisturbanceModel,
    num_drones: usize,
    dim: usize,
    rng: ChaCha8Rng,
}

impl DisturbanceSampler {
    pub fn bound(&self) -> f64 {
        self.model.bound
    }

    pub fn sample(&mut self, t: f64) -> Vec<Vec3> {
        let n = self.num_drones;
        let mut d: Vec<Vec3> = match &self.model.kind {
            DisturbanceKind::None => vec![Vec3::zeros(); n],
            DisturbanceKind::Constant { per_drone } => vec![Vec3::from(*per_drone); n],
            DisturbanceKind::Sinusoidal { amplitude, period } => (0..n)
                .map(|i| {
                    let phase = std::f64::consts::TAU * (t / period + i as f64 / n as f64);
                    Vec3::from(*amplitude) * phase.sin()
                })
                .collect(),
            DisturbanceKind::BoundedNoise => {
                let mut v: Vec<Vec3> = (0..n)
                    .map(|_| {
                        let x: f64 = self.rng.sample(StandardNormal);
                        let y: f64 = self.rng.sample(StandardNormal);
                        let z: f64 = self.rng.sample(StandardNormal);
                        Vec3::new(x, y, z)
                    })
                    .collect();
                if self.dim == 2 {
                    v.iter_mut().for_each(|p| p.z = 0.0);
                }
                let norm = stacked_norm(&v);
                if norm > 0.0 {
                    let s = self.model.bound / norm;
                    v.iter_mut().for_each(|p| *p *= s);
                }
                v
            }
        };
        if self.dim == 2 {
            d.iter_mut().for_each(|p| p.z = 0.0);
        }
        let norm = stacked_norm(&d);
        if norm > self.model.bound {
            let s = if norm > 0.0 { self.model.bound / norm } else { 0.0 };
            d.iter_mut().for_each(|p| *p *= s);
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Leg {
    Move { to: [f64; 3], speed: f64 },
    Wait { wait: f64 },
}

/// Piecewise-linear path at constant speed per leg; the target stops after the last leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScript {
    pub start: [f64; 3],
    #[serde(default)]
    pub legs: Vec<Leg>,
}

impl TargetScript {
    pub fn stationary(at: [f64; 3]) -> Self {
        Self { start: at, legs: Vec::new() }
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        let mut here = Vec3::from(self.start);
        let mut clock = 0.0;
        for leg in &self.legs {
            match *leg {
                Leg::Wait { wait } => {
                    if t < clock + wait {
                        return here;
                    }
                    clock += wait;
                }
                Leg::Move { to, speed } => {
                    let to = Vec3::from(to);
                    let len = (to - here).norm();
                    let dur = if speed > 0.0 { len / speed } else { f64::INFINITY };
                    if t < clock + dur {
                        return here + (to - here) * ((t - clock) / dur);
                    }
                    clock += dur;
                    here = to;
                }
            }
        }
        here
    }

    pub fn max_speed(&self) -> f64 {
        self.legs
            .iter()
            .map(|l| match l {
                Leg::Move { speed, .. } => *speed,
                Leg::Wait { .. } => 0.0,
            })
            .fold(0.0, f64::max)
    }

    /// Total scripted duration.
    pub fn duration(&self) -> f64 {
        let mut here = Vec3::from(self.start);
        let mut clock = 0.0;
        for leg in &self.legs {
            match *leg {
                Leg::Wait { wait } => clock += wait,
                Leg::Move { to, speed } => {
                    let to = Vec3::from(to);
                    clock += (to - here).norm() / speed;
                    here = to;
                }
            }
        }
        clock
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMotion {
    pub scripts: Vec<TargetScript>,
}

impl TargetMotion {
    pub fn speed_bound(&self) -> f64 {
        self.scripts.iter().map(TargetScript::max_speed).fold(0.0, f64::max)
    }

    pub fn positions_at(&self, t: f64) -> Vec<Vec3> {
        self.scripts.iter().map(|s| s.position_at(t)).collect()
    }

    /// Velocity held over `[t, t + dt)` that keeps the Euler-integrated target on its script.
    pub fn velocities(&self, t: f64, dt: f64) -> Vec<Vec3> {
        self.scripts
            .iter()
            .map(|s| (s.position_at(t + dt) - s.position_at(t)) / dt)
            .collect()
    }
}

pub fn stacked_norm(v: &[Vec3]) -> f64 {
    v.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
}

/// Distributed edge-error feedback, neighbor-sum form:
/// `u_i = sum_j (p_j - p_i) - (p_j^r - p_i^r)` with `p_j^r = p_j` for targets.
pub fn control_input(state: &SwarmState, reference: &ReferenceSignal, graph: &InteractionGraph) -> Vec<Vec3> {
    let na = state.drones.len();
    let mut u = vec![Vec3::zeros(); na];
    for &(i, j) in &graph.edges {
        let term = (state.position(j) - state.position(i))
            - (reference.node_reference(state, j) - reference.node_reference(state, i));
        u[i] += term;
        if j < na {
            u[j] -= term;
        }
    }
    u
}

/// Stacked form `(E_a ⊗ I_d) e`.
pub fn stacked_control(graph: &InteractionGraph, edge_error: &[Vec3]) -> Vec<Vec3> {
    let na = graph.nodes.num_drones;
    let mut u = vec![Vec3::zeros(); na];
    for (&(i, j), e) in graph.edges.iter().zip(edge_error) {
        u[i] += e;
        if j < na {
            u[j] -= e;
        }
    }
    u
}

/// `e = (E^T ⊗ I_d)(p^r - p)` over all nodes.
pub fn edge_error(state: &SwarmState, reference: &ReferenceSignal, graph: &InteractionGraph) -> Vec<Vec3> {
    let zr = edge_reference(state, reference, graph);
    let z = edge_relative(state, graph);
    zr.iter().zip(&z).map(|(a, b)| a - b).collect()
}

/// `e = (E_a^T ⊗ I_d)(p_a^r - p_a)`, drone rows only.
pub fn edge_error_drone_rows(state: &SwarmState, reference: &ReferenceSignal, graph: &InteractionGraph) -> Vec<Vec3> {
    let na = state.drones.len();
    let delta: Vec<Vec3> = reference.drones.iter().zip(&state.drones).map(|(r, p)| r - p).collect();
    graph
        .edges
        .iter()
        .map(|&(i, j)| if j < na { delta[i] - delta[j] } else { delta[i] })
        .collect()
}

/// `z = (E^T ⊗ I_d) p`.
pub fn edge_relative(state: &SwarmState, graph: &InteractionGraph) -> Vec<Vec3> {
    graph
        .edges
        .iter()
        .map(|&(i, j)| state.position(i) - state.position(j))
        .collect()
}

/// `z^r = (E^T ⊗ I_d) p^r`.
pub fn edge_reference(state: &SwarmState, reference: &ReferenceSignal, graph: &InteractionGraph) -> Vec<Vec3> {
    graph
        .edges
        .iter()
        .map(|&(i, j)| reference.node_reference(state, i) - reference.node_reference(state, j))
        .collect()
}

/// Exogenous edge input `w = ż^r - (E^T ⊗ I_d) d`, cross-checked against
/// `(E_a^T ⊗ I_d)(ṗ_a^r - d_a)`.
pub fn exogenous_input(
    graph: &InteractionGraph,
    reference_velocity: &[Vec3],
    disturbance: &[Vec3],
    target_velocity: &[Vec3],
) -> Result<Vec<Vec3>, DynamicsError> {
    let na = graph.nodes.num_drones;
    if reference_velocity.len() != na || disturbance.len() != na {
        return Err(DynamicsError::Length { expected: na, got: reference_velocity.len().min(disturbance.len()) });
    }
    if target_velocity.len() != graph.nodes.num_targets {
        return Err(DynamicsError::Length { expected: graph.nodes.num_targets, got: target_velocity.len() });
    }
    let ref_node = |k: usize| if k < na { reference_velocity[k] } else { target_velocity[k - na] };
    let dist_node = |k: usize| if k < na { disturbance[k] } else { target_velocity[k - na] };
    let mut w = Vec::with_capacity(graph.edges.len());
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for &(i, j) in &graph.edges {
        let zr_dot = ref_node(i) - ref_node(j);
        let full = zr_dot - (dist_node(i) - dist_node(j));
        let nu_i = reference_velocity[i] - disturbance[i];
        let reduced = if j < na { nu_i - (reference_velocity[j] - disturbance[j]) } else { nu_i };
        gap = gap.max((full - reduced).amax());
        scale = scale.max(full.amax()).max(zr_dot.amax());
        w.push(full);
    }
    if gap > EXOGENOUS_TOL * scale {
        return Err(DynamicsError::Inconsistent { gap });
    }
    Ok(w)
}

/// Explicit Euler step with a precomputed control.
pub fn step_with_control(
    state: &SwarmState,
    control: &[Vec3],
    disturbance: &[Vec3],
    target_velocity: &[Vec3],
    dt: f64,
) -> Result<SwarmState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::BadStep(dt));
    }
    let drones: Vec<Vec3> = state
        .drones
        .iter()
        .zip(control)
        .zip(disturbance)
        .map(|((p, u), d)| p + (u + d) * dt)
        .collect();
    let targets: Vec<Vec3> = state.targets.iter().zip(target_velocity).map(|(p, v)| p + v * dt).collect();
    let next = SwarmState { time: state.time + dt, drones, targets };
    if let Some(index) = next.positions().iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(DynamicsError::NonFinite { index });
    }
    Ok(next)
}

/// One explicit Euler step of the closed loop.
pub fn step(
    state: &SwarmState,
    reference: &ReferenceSignal,
    graph: &InteractionGraph,
    disturbance: &[Vec3],
    target_velocity: &[Vec3],
    dt: f64,
) -> Result<SwarmState, DynamicsError> {
    let u = control_input(state, reference, graph);
    step_with_control(state, &u, disturbance, target_velocity, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    /// `‖Δz^r‖`, measured in the post-jump edge coordinates.
    pub delta_norm: f64,
    pub e_minus_norm: f64,
    pub e_plus_norm: f64,
    /// Edge set differed across the instant; `e(t_k^+)` is reinitialized.
    pub reinitialized: bool,
    /// Largest componentwise `|e⁺ - e⁻ - Δz|`; zero when reinitialized.
    pub identity_residual: f64,
    pub edges_before: usize,
    pub edges_after: usize,
}

/// Swaps in a new drone reference at a supervision instant and records the jump.
pub fn apply_jump(
    old: &ReferenceSignal,
    new_drones: Vec<Vec3>,
    graph_before: &InteractionGraph,
    graph_after: &InteractionGraph,
    state: &SwarmState,
) -> (ReferenceSignal, JumpRecord) {
    let mut new = ReferenceSignal { drones: new_drones, valid_from: state.time, jump_magnitude: 0.0 };
    let e_minus = edge_error(state, old, graph_before);
    let e_plus = edge_error(state, &new, graph_after);
    let zr_old = edge_reference(state, old, graph_after);
    let zr_new = edge_reference(state, &new, graph_after);
    let delta: Vec<Vec3> = zr_new.iter().zip(&zr_old).map(|(a, b)| a - b).collect();
    let reinitialized = !graph_before.same_edges(graph_after);
    let identity_residual = if reinitialized {
        0.0
    } else {
        e_plus
            .iter()
            .zip(&e_minus)
            .zip(&delta)
            .map(|((p, m), d)| (p - m - d).amax())
            .fold(0.0, f64::max)
    };
    let delta_norm = stacked_norm(&delta);
    new.jump_magnitude = delta_norm;
    let record = JumpRecord {
        time: state.time,
        delta_norm,
        e_minus_norm: stacked_norm(&e_minus),
        e_plus_norm: stacked_norm(&e_plus),
        reinitialized,
        identity_residual,
        edges_before: graph_before.edge_count(),
        edges_after: graph_after.edge_count(),
    };
    (new, record)
}

/// Orthogonal projection onto `range(E_a^T ⊗ I_d)` for one fixed edge set.
#[derive(Debug, Clone)]
pub struct RangeProjector {
    edges: Vec<(usize, usize)>,
    num_drones: usize,
    gram_pinv: DMatrix<f64>,
}

impl RangeProjector {
    pub fn new(graph: &InteractionGraph) -> Self {
        let ea = graph.drone_rows();
        let gram = &ea * ea.transpose();
        let eig = gram.symmetric_eigen();
        let tol = 1e-9 * eig.eigenvalues.amax().max(1.0);
        let inv = eig.eigenvalues.map(|l| if l > tol { 1.0 / l } else { 0.0 });
        let gram_pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        Self { edges: graph.edges.clone(), num_drones: graph.nodes.num_drones, gram_pinv }
    }

    pub fn matches(&self, graph: &InteractionGraph) -> bool {
        self.edges == graph.edges
    }

    /// Norm of the component of `e` orthogonal to the range.
    pub fn residual(&self, e: &[Vec3]) -> f64 {
        let na = self.num_drones;
        // b = E_a e
        let mut b = DMatrix::<f64>::zeros(na, 3);
        for (&(i, j), v) in self.edges.iter().zip(e) {
            for c in 0..3 {
                b[(i, c)] += v[c];
                if j < na {
                    b[(j, c)] -= v[c];
                }
            }
        }
        let x = &self.gram_pinv * b;
        let mut acc = 0.0;
        for (&(i, j), v) in self.edges.iter().zip(e) {
            for c in 0..3 {
                let proj = if j < na { x[(i, c)] - x[(j, c)] } else { x[(i, c)] };
                acc += (v[c] - proj).powi(2);
            }
        }
        acc.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, NodeSet};

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn zero_error_gives_zero_control() {
        let s = SwarmState::new(0.0, vec![v(0., 0., 0.), v(1., 0., 0.)], vec![v(0., 1., 0.)]);
        let r = ReferenceSignal::hold(s.drones.clone(), 0.0);
        let g = build_graph(&s.positions(), NodeSet::new(2, 1, 3).unwrap(), 5.0).unwrap();
        assert!(control_input(&s, &r, &g).iter().all(|u| u.norm() == 0.0));
        assert!(edge_error(&s, &r, &g).iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn single_drone_pulled_to_reference() {
        let s = SwarmState::new(0.0, vec![v(1., 0., 0.)], vec![v(0., 0., 0.)]);
        let r = ReferenceSignal::hold(vec![v(0.5, 0., 0.)], 0.0);
        let g = build_graph(&s.positions(), NodeSet::new(1, 1, 3).unwrap(), 2.0).unwrap();
        assert_eq!(control_input(&s, &r, &g), vec![v(-0.5, 0., 0.)]);
    }

    #[test]
    fn edge_error_sign_follows_orientation() {
        let s = SwarmState::new(0.0, vec![v(0., 0., 0.), v(1., 0., 0.)], vec![]);
        let r = ReferenceSignal::hold(vec![v(0., 0., 0.), v(2., 0., 0.)], 0.0);
        let g = build_graph(&s.positions(), NodeSet::new(2, 0, 3).unwrap(), 5.0).unwrap();
        // z = p0 - p1 = (-1,0,0), z^r = (-2,0,0)
        assert_eq!(edge_error(&s, &r, &g), vec![v(-1., 0., 0.)]);
        assert_eq!(edge_error_drone_rows(&s, &r, &g), vec![v(-1., 0., 0.)]);
    }

    #[test]
    fn exogenous_zero_and_constant() {
        let s = SwarmState::new(0.0, vec![v(0., 0., 0.), v(1., 0., 0.)], vec![v(2., 0., 0.)]);
        let g = build_graph(&s.positions(), NodeSet::new(2, 1, 3).unwrap(), 1.5).unwrap();
        let z = vec![Vec3::zeros(); 2];
        let w = exogenous_input(&g, &z, &z, &[Vec3::zeros()]).unwrap();
        assert!(w.iter().all(|x| x.norm() == 0.0));
        let d = vec![v(0.1, 0., 0.); 2];
        let w = exogenous_input(&g, &z, &d, &[Vec3::zeros()]).unwrap();
        // edges (0,1): -(d0 - d1) = 0 ; (1,2): -d1
        assert_eq!(w, vec![v(0., 0., 0.), v(-0.1, 0., 0.)]);
    }

    #[test]
    fn exogenous_detects_inconsistency_only_through_length() {
        let g = InteractionGraph::from_edges(NodeSet::new(1, 1, 3).unwrap(), 1.0, [(0, 1)]);
        assert!(matches!(
            exogenous_input(&g, &[Vec3::zeros()], &[Vec3::zeros()], &[]),
            Err(DynamicsError::Length { .. })
        ));
    }

    #[test]
    fn fixed_point_and_bad_step() {
        let s = SwarmState::new(1.0, vec![v(1., 2., 3.)], vec![v(0., 0., 0.)]);
        let r = ReferenceSignal::hold(s.drones.clone(), 0.0);
        let g = build_graph(&s.positions(), NodeSet::new(1, 1, 3).unwrap(), 10.0).unwrap();
        let next = step(&s, &r, &g, &[Vec3::zeros()], &[Vec3::zeros()], 0.01).unwrap();
        assert_eq!(next.drones, s.drones);
        assert!((next.time - 1.01).abs() < 1e-15);
        assert_eq!(step(&s, &r, &g, &[Vec3::zeros()], &[Vec3::zeros()], 0.0), Err(DynamicsError::BadStep(0.0)));
    }

    #[test]
    fn non_finite_is_reported() {
        let s = SwarmState::new(0.0, vec![v(0., 0., 0.)], vec![]);
        let r = ReferenceSignal::hold(vec![v(f64::INFINITY, 0., 0.)], 0.0);
        let g = InteractionGraph::from_edges(NodeSet::new(1, 0, 3).unwrap(), 1.0, []);
        let u = vec![v(f64::NAN, 0., 0.)];
        assert_eq!(step_with_control(&s, &u, &[Vec3::zeros()], &[], 0.1), Err(DynamicsError::NonFinite { index: 0 }));
        // empty neighbor set: zero control, state unchanged
        assert_eq!(control_input(&s, &r, &g), vec![Vec3::zeros()]);
    }

    #[test]
    fn jump_unchanged_reference_is_noop() {
        let s = SwarmState::new(2.0, vec![v(0., 0., 0.), v(1., 0., 0.)], vec![v(1., 1., 0.)]);
        let r = ReferenceSignal::hold(vec![v(0.2, 0., 0.), v(1., 0.3, 0.)], 0.0);
        let g = build_graph(&s.positions(), NodeSet::new(2, 1, 3).unwrap(), 5.0).unwrap();
        let (new, rec) = apply_jump(&r, r.drones.clone(), &g, &g, &s);
        assert_eq!(rec.delta_norm, 0.0);
        assert_eq!(rec.e_minus_norm, rec.e_plus_norm);
        assert!(!rec.reinitialized);
        assert_eq!(new.valid_from, 2.0);
    }

    #[test]
    fn jump_identity_on_shift() {
        let s = SwarmState::new(0.0, vec![v(0., 0., 0.), v(1., 0., 0.)], vec![v(1., 1., 0.)]);
        let r = ReferenceSignal::hold(vec![v(0.2, 0., 0.), v(1., 0.3, 0.)], 0.0);
        let g = build_graph(&s.positions(), NodeSet::new(2, 1, 3).unwrap(), 5.0).unwrap();
        let mut shifted = r.drones.clone();
        shifted[1] += v(1., 0., 0.);
        let (_, rec) = apply_jump(&r, shifted, &g, &g, &s);
        assert!(rec.identity_residual < 1e-15);
        assert!(rec.e_plus_norm <= rec.e_minus_norm + rec.delta_norm + 1e-15);
        assert!(rec.delta_norm > 0.0);
    }

    #[test]
    fn jump_with_graph_change_reinitializes() {
        let s = SwarmState::new(0.0, vec![v(0., 0., 0.), v(1., 0., 0.)], vec![v(1.5, 0., 0.)]);
        let r = ReferenceSignal::hold(s.drones.clone(), 0.0);
        let nodes = NodeSet::new(2, 1, 3).unwrap();
        let before = InteractionGraph::from_edges(nodes, 2.0, [(0, 1)]);
        let after = build_graph(&s.positions(), nodes, 2.0).unwrap();
        let (_, rec) = apply_jump(&r, r.drones.clone(), &before, &after, &s);
        assert!(rec.reinitialized);
        assert_eq!(rec.edges_after, after.edge_count());
        assert_eq!(edge_error(&s, &r, &after).len() * 3, 3 * rec.edges_after);
    }

    #[test]
    fn range_residual_of_consistent_error_is_tiny() {
        let s = SwarmState::new(0.0, vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![v(5., 5., 0.)]);
        let r = ReferenceSignal::hold(vec![v(0.3, 0.1, 0.), v(1.2, -0.4, 0.5), v(0., 1.3, 0.)], 0.0);
        let g = build_graph(&s.positions(), NodeSet::new(3, 1, 3).unwrap(), 2.0).unwrap();
        let proj = RangeProjector::new(&g);
        let e = edge_error(&s, &r, &g);
        assert!(proj.residual(&e) < 1e-12);
        // the drone cycle has a kernel; a circulation is orthogonal to the range
        let circulation = vec![v(1., 0., 0.), v(-1., 0., 0.), v(1., 0., 0.)];
        assert_eq!(g.edges, vec![(0, 1), (0, 2), (1, 2)]);
        assert!(proj.residual(&circulation) > 0.5);
    }

    #[test]
    fn disturbance_respects_bound() {
        for kind in [
            DisturbanceKind::BoundedNoise,
            DisturbanceKind::Constant { per_drone: [1.0, 0.0, 0.0] },
            DisturbanceKind::Sinusoidal { amplitude: [0.5, 0.5, 0.0], period: 3.0 },
        ] {
            let mut s = DisturbanceModel { kind, bound: 0.3, seed: 9 }.sampler(4, 3);
            for k in 0..200 {
                assert!(stacked_norm(&s.sample(k as f64 * 0.1)) <= 0.3 + 1e-15);
            }
        }
    }

    #[test]
    fn target_script_follows_polyline() {
        let s = TargetScript {
            start: [0., 0., 0.],
            legs: vec![
                Leg::Move { to: [10., 0., 0.], speed: 2.0 },
                Leg::Wait { wait: 1.0 },
                Leg::Move { to: [10., 10., 0.], speed: 5.0 },
            ],
        };
        assert_eq!(s.position_at(2.5), v(5., 0., 0.));
        assert_eq!(s.position_at(5.5), v(10., 0., 0.));
        assert_eq!(s.position_at(7.0), v(10., 5., 0.));
        assert_eq!(s.position_at(100.0), v(10., 10., 0.));
        assert!((s.duration() - 8.0).abs() < 1e-12);
        let m = TargetMotion { scripts: vec![s] };
        assert!(m.velocities(3.0, 0.01)[0].norm() <= m.speed_bound() + 1e-9);
    }
}
