//! Single drone chasing jumping references under bounded noise: the measured edge error
//! against the exponential envelope, with the slack constant fitted by halving dt.

use std::time::Instant;

use edgeform::theory::fixtures::TrackingFixture;

fn main() {
    let fx = TrackingFixture::default();
    let t0 = Instant::now();
    let r = fx.certify().expect("fixture runs");
    println!("dt sweep {:?}", r.sweep.dts);
    println!("  worst excess {:?}", r.sweep.excess);
    println!("  halving ratio {:.3}, C = {:.4}, tolerance C*dt = {:.2e}", r.halving_ratio, r.sweep.c, r.tolerance);
    let worst = r.seed_excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{} seeds x {} samples: worst excess {worst:.2e} -> {}",
        r.seed_excess.len(),
        r.samples_per_seed,
        if r.pass { "within" } else { "OUTSIDE" }
    );
    println!("elapsed {:.2?}", t0.elapsed());
}
