//! Edge-error tracking under bounded disturbance, and the jump at a reference switch.

use edgeform::dynamics::{apply_jump, edge_error, stacked_norm, step, DisturbanceModel, ReferenceSignal, RangeProjector, SwarmState};
use edgeform::graph::{actuated_edge_laplacian, build_graph, NodeSet};
use edgeform::Vec3;

fn main() {
    let nodes = NodeSet::new(3, 1, 3).unwrap();
    let radius = 6.0;
    let mut state = SwarmState::new(
        0.0,
        vec![Vec3::new(3.0, 0.5, 0.0), Vec3::new(0.0, 3.0, 0.2), Vec3::new(-2.5, -1.0, 0.0)],
        vec![Vec3::zeros()],
    );
    let mut reference = ReferenceSignal::hold(
        vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), Vec3::new(-2.0, 0.0, 0.0)],
        0.0,
    );
    let mut noise = DisturbanceModel::noise(0.05, 7).sampler(3, 3);
    let dt = 1e-3;
    let still = vec![Vec3::zeros()];

    let mut graph = build_graph(&state.positions(), nodes, radius).unwrap();
    let s = actuated_edge_laplacian(&graph).unwrap();
    let projector = RangeProjector::new(&graph);
    println!("{} edges, lambda_min+ {:.4}", graph.edge_count(), s.lambda_min_plus);
    for k in 0..=4000 {
        if k % 1000 == 0 {
            let e = edge_error(&state, &reference, &graph);
            println!("t={:.1}  |e|={:.5}  range residual {:.1e}", state.time, stacked_norm(&e), projector.residual(&e));
        }
        let d = noise.sample(state.time);
        state = step(&state, &reference, &graph, &d, &still, dt).unwrap();
    }

    let after = build_graph(&state.positions(), nodes, radius).unwrap();
    let (next, jump) = apply_jump(
        &reference,
        vec![Vec3::new(1.5, 1.5, 0.0), Vec3::new(-1.5, 1.5, 0.0), Vec3::new(0.0, -2.0, 0.0)],
        &graph,
        &after,
        &state,
    );
    println!(
        "\njump at t={:.1}: |dz|={:.4}, |e-|={:.5}, |e+|={:.4}, identity residual {:.1e}",
        jump.time, jump.delta_norm, jump.e_minus_norm, jump.e_plus_norm, jump.identity_residual
    );
    reference = next;
    graph = after;
    for _ in 0..3000 {
        let d = noise.sample(state.time);
        state = step(&state, &reference, &graph, &d, &still, dt).unwrap();
    }
    println!("t={:.1}  |e|={:.5}", state.time, stacked_norm(&edge_error(&state, &reference, &graph)));
}
