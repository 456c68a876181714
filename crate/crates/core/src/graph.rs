//! Radius-induced interaction graph and the linear algebra derived from it.
//!
//! Nodes `0..num_drones` are drones, the remaining `num_targets` nodes are
//! targets. An edge `(i, j)` always has `i < j`, so its incidence column holds
//! `+1` at `i` and `-1` at `j`; since targets carry the highest indices, the
//! tail of every edge is a drone.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

/// Relative threshold under which an eigenvalue is treated as zero.
pub const ZERO_EIGEN_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("expected {expected} positions, got {got}")]
    PositionCount { expected: usize, got: usize },
    #[error("node {node} has a nonzero z coordinate in a planar (d = 2) node set")]
    PlanarViolation { node: usize },
    #[error("observation radius must be finite and non-negative, got {0}")]
    BadRadius(f64),
    #[error("node set needs at least one drone and dimension 2 or 3")]
    BadNodeSet,
    #[error("graph has no edges; no spectrum is defined")]
    EmptyGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSet {
    pub num_drones: usize,
    pub num_targets: usize,
    pub dim: usize,
}

impl NodeSet {
    pub fn new(num_drones: usize, num_targets: usize, dim: usize) -> Result<Self, GraphError> {
        if num_drones == 0 || !(2..=3).contains(&dim) {
            return Err(GraphError::BadNodeSet);
        }
        Ok(Self { num_drones, num_targets, dim })
    }

    pub fn total(&self) -> usize {
        self.num_drones + self.num_targets
    }

    pub fn is_drone(&self, node: usize) -> bool {
        node < self.num_drones
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub nodes: NodeSet,
    pub radius: f64,
    /// Oriented edges, lexicographically sorted, `tail < head`.
    pub edges: Vec<(usize, usize)>,
}

impl InteractionGraph {
    /// Builds a graph from an explicit edge list, normalising orientation and order.
    pub fn from_edges(nodes: NodeSet, radius: f64, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self { nodes, radius, edges }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn same_edges(&self, other: &InteractionGraph) -> bool {
        self.edges == other.edges
    }

    /// Oriented incidence matrix `E` (N x m).
    pub fn incidence(&self) -> DMatrix<f64> {
        let n = self.nodes.total();
        let mut e = DMatrix::zeros(n, self.edges.len());
        for (col, &(i, j)) in self.edges.iter().enumerate() {
            e[(i, col)] = 1.0;
            e[(j, col)] = -1.0;
        }
        e
    }

    /// Drone rows `E_a` of the incidence matrix.
    pub fn drone_rows(&self) -> DMatrix<f64> {
        self.incidence().rows(0, self.nodes.num_drones).into_owned()
    }

    /// Target rows `E_b` of the incidence matrix.
    pub fn target_rows(&self) -> DMatrix<f64> {
        self.incidence()
            .rows(self.nodes.num_drones, self.nodes.num_targets)
            .into_owned()
    }

    /// Neighbors of every node.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.total()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Compact textual form `0-1;1-2` used in logs.
    pub fn edge_string(&self) -> String {
        self.edges
            .iter()
            .map(|(i, j)| format!("{i}-{j}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_edge_string(nodes: NodeSet, radius: f64, s: &str) -> Option<Self> {
        let mut edges = Vec::new();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (a, b) = part.split_once('-')?;
            edges.push((a.trim().parse().ok()?, b.trim().parse().ok()?));
        }
        Some(Self::from_edges(nodes, radius, edges))
    }
}

/// Builds the radius-induced graph: `(i, j)` is an edge iff one endpoint is a
/// drone and `|p_i - p_j| <= r`. Target-target pairs never connect.
pub fn build_graph(positions: &[Vec3], nodes: NodeSet, radius: f64) -> Result<InteractionGraph, GraphError> {
    if positions.len() != nodes.total() {
        return Err(GraphError::PositionCount { expected: nodes.total(), got: positions.len() });
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(GraphError::BadRadius(radius));
    }
    if nodes.dim == 2 {
        if let Some(node) = positions.iter().position(|p| p.z != 0.0) {
            return Err(GraphError::PlanarViolation { node });
        }
    }
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for i in 0..nodes.num_drones {
        for j in (i + 1)..nodes.total() {
            if (positions[i] - positions[j]).norm_squared() <= r2 {
                edges.push((i, j));
            }
        }
    }
    Ok(InteractionGraph { nodes, radius, edges })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub nodes: Vec<usize>,
    /// Component contains at least one target.
    pub anchored: bool,
}

/// Connected components, including isolated nodes as singletons, ordered by
/// smallest member.
pub fn connected_components(graph: &InteractionGraph) -> Vec<Component> {
    let n = graph.nodes.total();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in &graph.edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        by_root.entry(r).or_default().push(v);
    }
    let mut comps: Vec<Component> = by_root
        .into_values()
        .map(|nodes| {
            let anchored = nodes.iter().any(|&v| !graph.nodes.is_drone(v));
            Component { nodes, anchored }
        })
        .collect();
    comps.sort_by_key(|c| c.nodes[0]);
    comps
}

#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// `L_e^a = E_a^T E_a`, m x m.
    pub actuated_edge_laplacian: DMatrix<f64>,
    /// Eigenvalues of `L_e^a`, ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_min_plus: f64,
    pub lambda_max: f64,
    pub kernel_dim: usize,
    pub rank: usize,
    pub components: Vec<Component>,
}

impl SpectralSummary {
    /// Largest singular value of `E_a` (equivalently of `E_a^T`).
    pub fn drone_incidence_norm(&self) -> f64 {
        self.lambda_max.max(0.0).sqrt()
    }
}

pub(crate) fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn zero_threshold(lambda_max: f64) -> f64 {
    ZERO_EIGEN_REL_TOL * lambda_max.max(1.0)
}

/// Nonzero eigenvalues (ascending) under the shared zero threshold.
pub fn nonzero_spectrum(eigenvalues: &[f64]) -> Vec<f64> {
    let max = eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = zero_threshold(max);
    eigenvalues.iter().copied().filter(|&v| v > tol).collect()
}

/// Actuated edge Laplacian and its spectral data.
pub fn actuated_edge_laplacian(graph: &InteractionGraph) -> Result<SpectralSummary, GraphError> {
    if graph.edges.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let ea = graph.drone_rows();
    let lap = ea.transpose() * &ea;
    let eigenvalues = sorted_eigenvalues(lap.clone());
    let lambda_max = *eigenvalues.last().unwrap_or(&0.0);
    let tol = zero_threshold(lambda_max);
    let kernel_dim = eigenvalues.iter().filter(|&&v| v <= tol).count();
    let lambda_min_plus = eigenvalues.iter().copied().find(|&v| v > tol).unwrap_or(0.0);
    Ok(SpectralSummary {
        actuated_edge_laplacian: lap,
        rank: eigenvalues.len() - kernel_dim,
        eigenvalues,
        lambda_min_plus,
        lambda_max,
        kernel_dim,
        components: connected_components(graph),
    })
}

/// `λ_min⁺` and `λ_max` through the smaller Gram matrix `E_a E_a^T`
/// (N_a x N_a). Same nonzero spectrum as `E_a^T E_a`, cheaper for dense graphs.
pub fn lambda_bounds(graph: &InteractionGraph) -> Option<(f64, f64)> {
    if graph.edges.is_empty() {
        return None;
    }
    let ea = graph.drone_rows();
    let gram = if ea.nrows() <= ea.ncols() { &ea * ea.transpose() } else { ea.transpose() * &ea };
    let ev = sorted_eigenvalues(gram);
    let max = *ev.last()?;
    let tol = zero_threshold(max);
    let min_plus = ev.iter().copied().find(|&v| v > tol)?;
    Some((min_plus, max))
}

/// Eigenvalues of `E_a E_a^T` (N_a x N_a), ascending.
pub fn node_space_spectrum(graph: &InteractionGraph) -> Vec<f64> {
    let ea = graph.drone_rows();
    sorted_eigenvalues(&ea * ea.transpose())
}

/// Node-space operator `E_a E_a^T` restricted to the drones of one component.
pub fn component_node_operator(graph: &InteractionGraph, component: &Component) -> DMatrix<f64> {
    let drones: Vec<usize> = component.nodes.iter().copied().filter(|&v| graph.nodes.is_drone(v)).collect();
    let ea = graph.drone_rows();
    let full = &ea * ea.transpose();
    DMatrix::from_fn(drones.len(), drones.len(), |r, c| full[(drones[r], drones[c])])
}
