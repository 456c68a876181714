//! Writes a run directory, then recomputes its bound report from the files alone.

use edgeform::backends::RuleBackend;
use edgeform::scenario::{run, scenario};
use edgeform::theory::{certify_run, CertifyParams};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(scenario("chase-2").unwrap().with_seed(4), Box::new(RuleBackend)).unwrap();
    out.logs.write_dir(dir.path(), &out.config).unwrap();
    for entry in std::fs::read_dir(dir.path()).unwrap().flatten() {
        println!("  {}", entry.file_name().to_string_lossy());
    }

    let report = certify_run(dir.path(), &CertifyParams::default()).unwrap();
    for row in report.rows.iter().filter(|r| r.asserted).take(5) {
        println!(
            "  k={:<3} e0={:.4} max={:.4} bound={:.4} slack={:.2e}",
            row.k,
            row.e0,
            row.measured_max,
            row.bound_at_worst.unwrap_or(f64::NAN),
            row.min_slack.unwrap_or(f64::NAN)
        );
    }
    println!("{}", report.verdict_line());
}
