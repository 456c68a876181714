//! Search-and-rescue: waypoint sweep, detection, then encirclement of the person found.

use edgeform::backends::RuleBackend;
use edgeform::scenario::{metrics, run, scenario};

fn main() {
    for name in ["sar-1", "sar-3"] {
        let out = run(scenario(name).unwrap(), Box::new(RuleBackend)).unwrap();
        let m = metrics(&out.logs);
        println!("{name}: {}", out.config.description);
        for e in out.logs.events.iter().filter(|e| matches!(e.kind.as_str(), "detection" | "region_expanded")) {
            println!("  t={:>5.1} {} {}", e.t, e.kind, e.payload);
        }
        println!(
            "  waypoints issued {}, cleared {}, reassignments {}",
            m.waypoints_issued, m.waypoints_cleared, m.reassignments
        );
        match m.time_to_detection {
            Some(t) => println!("  detected {t:.1} s after the search began"),
            None => println!("  nothing detected"),
        }
        if let Some(r) = m.circle_radius_rms {
            println!("  encirclement radius RMS error {r:.2e}");
        }
    }
}
