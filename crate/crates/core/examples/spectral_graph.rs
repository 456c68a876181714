//! Radius graphs and the spectrum of the actuated edge Laplacian.

use edgeform::graph::{actuated_edge_laplacian, build_graph, connected_components, lambda_bounds, NodeSet};
use edgeform::Vec3;

fn main() {
    // drone - drone - target in a line
    let positions = [Vec3::new(8.0, 0.0, 0.0), Vec3::new(4.0, 0.0, 0.0), Vec3::zeros()];
    let g = build_graph(&positions, NodeSet::new(2, 1, 3).unwrap(), 5.0).unwrap();
    let s = actuated_edge_laplacian(&g).unwrap();
    println!("edges {}", g.edge_string());
    println!("L_e^a =\n{}", s.actuated_edge_laplacian);
    println!("lambda_min+ = {:.12} (golden value {:.12})", s.lambda_min_plus, (3.0 - 5f64.sqrt()) / 2.0);
    println!("lambda_max  = {:.12}, ||E_a|| = {:.6}", s.lambda_max, s.drone_incidence_norm());

    // a ring of six drones with one target nearby, plus a stray drone out of range
    let mut ring: Vec<Vec3> = (0..6)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 6.0;
            Vec3::new(3.0 * a.cos(), 3.0 * a.sin(), 5.0)
        })
        .collect();
    ring.push(Vec3::new(40.0, 0.0, 5.0));
    ring.push(Vec3::new(0.0, 0.0, 3.0));
    let g = build_graph(&ring, NodeSet::new(7, 1, 3).unwrap(), 4.0).unwrap();
    let s = actuated_edge_laplacian(&g).unwrap();
    println!("\nring: {} edges, kernel dim {}, rank {}", g.edge_count(), s.kernel_dim, s.rank);
    for c in connected_components(&g) {
        println!("  component {:?} anchored={}", c.nodes, c.anchored);
    }
    let (lo, hi) = lambda_bounds(&g).unwrap();
    println!("node-space Gram gives the same extremes: {lo:.9} {hi:.9} vs {:.9} {:.9}", s.lambda_min_plus, s.lambda_max);
}
