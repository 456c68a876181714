use edgeform::backends::RuleBackend;
use edgeform::scenario::builtin::hover;
use edgeform::scenario::{metrics, run, scenario, RunLogs};
use edgeform::supervision::Command;
use edgeform::theory::{certify_logs, certify_run, CertifyParams};

fn bytes(logs: &RunLogs) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    (logs.trajectory_csv().unwrap(), logs.supervision_csv().unwrap(), logs.events_jsonl().unwrap())
}

#[test]
fn same_seed_same_bytes() {
    let config = scenario("sar-2").unwrap().with_seed(5);
    let a = run(config.clone(), Box::new(RuleBackend)).unwrap();
    let b = run(config, Box::new(RuleBackend)).unwrap();
    assert_eq!(bytes(&a.logs), bytes(&b.logs));
    let c = run(scenario("sar-2").unwrap().with_seed(6), Box::new(RuleBackend)).unwrap();
    assert_ne!(a.logs.trajectory_csv().unwrap(), c.logs.trajectory_csv().unwrap());
}

#[test]
fn waypoints_stay_inside_the_live_region() {
    for name in ["sar-1", "sar-3"] {
        let out = run(scenario(name).unwrap(), Box::new(RuleBackend)).unwrap();
        let mut region = out.config.supervisor.default_search_region.expect("search missions carry a region");
        let mut waypoints = 0;
        for e in &out.logs.events {
            match e.kind.as_str() {
                "region_expanded" => region = serde_json::from_value(e.payload["region"].clone()).unwrap(),
                "waypoint" => {
                    waypoints += 1;
                    let w: Vec<f64> = serde_json::from_value(e.payload["waypoint"].clone()).unwrap();
                    for c in 0..3 {
                        assert!(w[c] >= region.min[c] - 1e-9 && w[c] <= region.max[c] + 1e-9, "{name}: {w:?} outside {region:?}");
                    }
                }
                _ => {}
            }
        }
        assert!(waypoints > 0);
        assert!(metrics(&out.logs).time_to_detection.is_some(), "{name} never detected the person");
    }
}

#[test]
fn run_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = hover(5, Command::Text("Form a line with spacing 3.".into()));
    config.duration = 6.0;
    let out = run(config, Box::new(RuleBackend)).unwrap();
    out.logs.write_dir(dir.path(), &out.config).unwrap();
    let from_disk = certify_run(dir.path(), &CertifyParams::default()).unwrap();
    let in_memory = certify_logs(&out.config, &out.logs, &CertifyParams::default()).unwrap();
    assert_eq!(from_disk.rows, in_memory.rows);
    assert!(from_disk.pass);
    assert!(out.stats.max_range_residual <= 1e-9);
}

#[test]
fn chase_regroups_into_balanced_shapes() {
    let out = run(scenario("chase-1").unwrap(), Box::new(RuleBackend)).unwrap();
    let split = out.logs.events_of("split").next().expect("groups split");
    let rebalance = out.logs.events_of("rebalance").next().expect("groups rebalance");
    assert_eq!(split.payload["sizes"].as_array().unwrap().len(), 3);
    assert_eq!(rebalance.payload["to"], serde_json::json!([8, 8, 8]));
    assert!(rebalance.t - split.t <= out.config.check_interval + 1e-9);
    let m = metrics(&out.logs);
    assert_eq!(m.final_group_sizes, vec![8, 8, 8]);
    assert_eq!(m.final_shapes, vec!["circle", "square", "cross"]);
}
