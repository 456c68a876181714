//! The three-car chase: grid, split, rebalance, then mixed shapes, with the supervision timeline.

use edgeform::backends::RuleBackend;
use edgeform::scenario::{metrics, run, scenario};

fn main() {
    let config = scenario("chase-1").unwrap();
    for c in &config.commands {
        println!("t={:>5.1} scheduled: {}", c.t, c.command.describe());
    }
    let out = run(config, Box::new(RuleBackend)).unwrap();
    for e in &out.logs.events {
        match e.kind.as_str() {
            "command" => println!("t={:>5.1} command   {}", e.t, e.payload["text"]),
            "split" | "merge" => println!("t={:>5.1} {:<9} sizes {}", e.t, e.kind, e.payload["sizes"]),
            "rebalance" => println!("t={:>5.1} rebalance {} -> {}", e.t, e.payload["from"], e.payload["to"]),
            _ => {}
        }
    }
    let flagged = out.logs.events_of("verdict").filter(|e| e.payload["consistent"] == false).count();
    println!("{flagged} checks flagged the formation as off-intent");
    let m = metrics(&out.logs);
    println!("final groups {:?} {:?}", m.final_group_sizes, m.final_shapes);
    for p in &m.phase_residuals {
        println!("  [{:>5.1}, {:>5.1}) mean RMS {:.3}  {}", p.start, p.end, p.mean_rms, p.command);
    }
    let failed = out.bound_rows.iter().filter(|r| !r.pass).count();
    println!(
        "{} ticks, {} checks, {} graph changes, range residual {:.1e}, {failed} failed bound rows",
        out.stats.ticks, out.stats.checks, out.stats.graph_changes, out.stats.max_range_residual
    );
}
