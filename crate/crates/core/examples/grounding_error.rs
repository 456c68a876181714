//! Two drones and a target with a corrupted grounding each check: the error to the clean
//! formation just before the next check stays below delta.

use edgeform::theory::fixtures::LoopClosureFixture;

fn main() {
    for eps in [0.1, 0.45] {
        let fx = LoopClosureFixture { eps_z: eps, ..LoopClosureFixture::default() };
        let r = fx.certify().expect("fixture runs");
        print!("eps_z {eps:.2}, delta_z {:.2}: eta_max {:.3}, ", r.delta_z, r.eta_max);
        match r.pass {
            None => println!("infeasible (eps_z too large for this interval); nothing asserted"),
            Some(ok) => println!(
                "{} intervals, worst gap {:.4} vs {:.4} + {:.1e} -> {}",
                r.intervals,
                r.max_end_gap,
                r.delta_z,
                r.tolerance,
                if ok { "ok" } else { "VIOLATED" }
            ),
        }
    }
}
