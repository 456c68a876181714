//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use edgeform::backends::{parse_feedback_json, parse_formation_csv, parse_motion_descriptor, RuleBackend};
use edgeform::graph::{actuated_edge_laplacian, build_graph, node_space_spectrum, nonzero_spectrum, NodeSet};
use edgeform::scenario::{builtin_scenarios, metrics, run, scenario, RunLogs, RunOutput, EVENTS_FILE, SUPERVISION_FILE, TRAJECTORY_FILE};
use edgeform::supervision::{GroupSpec, Intent, Mode, SearchRegion, Shape};
use edgeform::theory::fixtures::{path_home, LoopClosureFixture, HorizonFixture, TrackingFixture, PATH_RADIUS};
use edgeform::theory::MarkovChain;
use edgeform::Vec3;
use edgeform_station::cli::run_headless;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn spectral() -> Outcome {
    let start = Instant::now();
    let g = build_graph(&path_home().positions(), NodeSet::new(2, 1, 3).unwrap(), PATH_RADIUS).unwrap();
    let lmin = actuated_edge_laplacian(&g).unwrap().lambda_min_plus;
    let golden_gap = (lmin - (3.0 - 5f64.sqrt()) / 2.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    let mut graphs = 0;
    while graphs < 100 {
        let total = rng.random_range(2..=30usize);
        let drones = rng.random_range(1..=total);
        let pts: Vec<Vec3> = (0..total)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let g = build_graph(&pts, NodeSet::new(drones, total - drones, 3).unwrap(), rng.random_range(1.5..6.0)).unwrap();
        if g.edge_count() == 0 {
            continue;
        }
        graphs += 1;
        let edge = nonzero_spectrum(&actuated_edge_laplacian(&g).unwrap().eigenvalues);
        let node = nonzero_spectrum(&node_space_spectrum(&g));
        if edge.len() != node.len() {
            mismatched += 1;
            continue;
        }
        worst = edge.iter().zip(&node).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        golden_gap <= 1e-9 && worst <= 1e-9 && mismatched == 0 && secs < 1.0,
        format!("path lambda_min+ off by {golden_gap:.1e}; {graphs} random graphs, worst gap {worst:.1e}, {mismatched} rank mismatches; {secs:.2} s"),
    )
}

fn tracking() -> (Outcome, f64) {
    let start = Instant::now();
    let fx = TrackingFixture::default();
    let r = fx.certify().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = r.seed_excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (
        outcome(
            r.pass && secs < 30.0,
            format!(
                "{} seeds x {} samples, worst excess {worst:.2e} vs C*dt {:.2e}, halving ratio {:.3}; {secs:.1} s",
                r.seed_excess.len(),
                r.samples_per_seed,
                r.tolerance,
                r.halving_ratio
            ),
        ),
        r.max_range_residual,
    )
}

fn jump_identity(runs: &[RunOutput]) -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for out in runs {
        for row in out.logs.supervision.iter().filter(|r| !r.reinitialized && r.edges_before > 0) {
            checked += 1;
            worst = worst.max(row.identity_residual);
        }
    }
    let fx = TrackingFixture::default();
    for seed in 0..5 {
        for t in fx.run(fx.dt, Some(seed)).unwrap().iter().filter(|t| !t.jump.reinitialized) {
            checked += 1;
            worst = worst.max(t.jump.identity_residual);
        }
    }
    outcome(checked > 0 && worst <= 1e-12, format!("{checked} instants without a graph change, worst residual {worst:.1e}"))
}

fn loop_closure() -> (Outcome, f64) {
    let r = LoopClosureFixture::default().certify().unwrap();
    let infeasible = LoopClosureFixture { eps_z: 0.45, ..LoopClosureFixture::default() }.certify().unwrap();
    let note = format!(
        "eps_z 0.45 reported {}",
        if infeasible.pass.is_none() { "infeasible, not asserted" } else { "feasible" }
    );
    let line = match r.pass {
        Some(p) => outcome(
            p,
            format!(
                "eps_z {} delta_z {}: {} intervals, worst end gap {:.4} vs {:.4}, {} violations; {note}",
                r.eps_z,
                r.delta_z,
                r.intervals,
                r.max_end_gap,
                r.delta_z + r.tolerance,
                r.violations
            ),
        ),
        None => outcome(false, format!("eps_z {} delta_z {} is infeasible, so nothing was asserted; {note}", r.eps_z, r.delta_z)),
    };
    (line, r.max_range_residual)
}

fn markov() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut closed_gap = 0.0f64;
    let mut mean_gap = 0.0f64;
    for _ in 0..1000 {
        let chain = MarkovChain::new(rng.random_range(0.001..1.0), rng.random_range(0.001..1.0)).unwrap();
        let p0 = rng.random_range(0.0..=1.0);
        let k = rng.random_range(1..=300u64);
        closed_gap = closed_gap.max((chain.wrong_prob(p0, k).unwrap() - chain.wrong_prob_recursion(p0, k).unwrap()).abs());
        mean_gap = mean_gap.max((chain.mean_wrong_prob(p0, k).unwrap() - chain.mean_wrong_prob_direct(p0, k).unwrap()).abs());
    }
    let chain = MarkovChain::new(0.2, 0.6).unwrap();
    let mc_gap = [1usize, 3, 10]
        .iter()
        .map(|&k| (chain.monte_carlo_wrong(0.5, k, 100_000, 17) - chain.wrong_prob(0.5, k as u64).unwrap()).abs())
        .fold(0.0, f64::max);
    outcome(
        closed_gap <= 1e-12 && mean_gap <= 1e-12 && mc_gap <= 0.01,
        format!("closed form vs recursion {closed_gap:.1e}, running mean vs sum {mean_gap:.1e}, Monte Carlo (1e5 chains) {mc_gap:.4}"),
    )
}

fn horizon() -> (Outcome, f64) {
    let fx = HorizonFixture::default();
    let r = fx.certify().unwrap();
    let dominated = r.runs.iter().filter(|x| x.bound.finite >= x.measured).count();
    (
        outcome(
            r.pass,
            format!(
                "J {} eps_C {} eps_W {} a {} b {}: bound dominates {dominated}/{} runs (worst margin {:.4}), limit gap {:.1e}",
                fx.jump_bound,
                fx.eps_correct,
                fx.eps_wrong,
                fx.markov_a,
                fx.markov_b,
                r.runs.len(),
                r.worst_margin,
                r.limit_gap
            ),
        ),
        r.max_range_residual,
    )
}

fn range_residual(runs: &[RunOutput], fixtures: &[(&str, f64)]) -> Outcome {
    let mut parts: Vec<String> = runs.iter().map(|o| format!("{} {:.0e}", o.config.name, o.stats.max_range_residual)).collect();
    parts.extend(fixtures.iter().map(|(n, r)| format!("{n} {r:.0e}")));
    let worst = runs.iter().map(|o| o.stats.max_range_residual).chain(fixtures.iter().map(|f| f.1)).fold(0.0, f64::max);
    outcome(worst <= 1e-9, format!("worst {worst:.1e} ({})", parts.join(", ")))
}

fn log_bytes(logs: &RunLogs) -> [Vec<u8>; 3] {
    [logs.trajectory_csv().unwrap(), logs.supervision_csv().unwrap(), logs.events_jsonl().unwrap()]
}

fn chase_phases(out: &RunOutput) -> Result<String, String> {
    let logs = &out.logs;
    let first = logs.events_of("reground").next().ok_or("no grounding")?;
    let groups = first.payload["groups"].as_array().ok_or("no groups")?;
    if groups.len() != 1 || groups[0]["shape"] != "grid" {
        return Err(format!("first formation is {}", first.payload["groups"]));
    }
    let split = logs.events_of("split").next().ok_or("never split")?;
    if split.payload["sizes"].as_array().map(Vec::len) != Some(3) {
        return Err(format!("split into {}", split.payload["sizes"]));
    }
    let rebalance = logs.events_of("rebalance").next().ok_or("never rebalanced")?;
    if rebalance.payload["to"] != json!([8, 8, 8]) || rebalance.t - split.t > out.config.check_interval + 1e-9 {
        return Err(format!("rebalanced to {} at t={}", rebalance.payload["to"], rebalance.t));
    }
    let m = metrics(logs);
    if m.final_group_sizes != [8, 8, 8] || m.final_shapes != ["circle", "square", "cross"] {
        return Err(format!("final {:?} {:?}", m.final_group_sizes, m.final_shapes));
    }
    Ok(format!("chase-1 grid -> split t={} -> 8/8/8 t={} -> circle/square/cross", split.t, rebalance.t))
}

fn sar_encirclement(out: &RunOutput) -> Result<String, String> {
    let mut region: SearchRegion = out.config.supervisor.default_search_region.ok_or("no search region")?;
    let mut outside = 0;
    let mut issued = 0;
    for e in &out.logs.events {
        match e.kind.as_str() {
            "region_expanded" => region = serde_json::from_value(e.payload["region"].clone()).map_err(|e| e.to_string())?,
            "waypoint" => {
                issued += 1;
                let w: [f64; 3] = serde_json::from_value(e.payload["waypoint"].clone()).map_err(|e| e.to_string())?;
                if (0..3).any(|c| w[c] < region.min[c] || w[c] > region.max[c]) {
                    outside += 1;
                }
            }
            _ => {}
        }
    }
    let m = metrics(&out.logs);
    let detected = m.time_to_detection.ok_or("no detection")?;
    let radius_err = m.circle_radius_rms.ok_or("no encirclement")?;
    if outside > 0 || m.final_shapes != ["circle"] || radius_err > 0.5 {
        return Err(format!("{outside} of {issued} waypoints outside, final {:?}, radius error {radius_err:.3}", m.final_shapes));
    }
    Ok(format!("sar-1 detected after {detected:.0} s, {issued} waypoints inside, circle radius rms {radius_err:.1e}"))
}

fn scenario_structure(runs: &[RunOutput], first_pass: f64) -> Outcome {
    let started = Instant::now();
    let find = |name: &str| runs.iter().find(|o| o.config.name == name).expect("built-in scenario ran");
    let mut notes = Vec::new();
    let mut pass = true;
    for r in [chase_phases(find("chase-1")), sar_encirclement(find("sar-1"))] {
        match r {
            Ok(n) => notes.push(n),
            Err(e) => {
                pass = false;
                notes.push(format!("FAILED {e}"));
            }
        }
    }
    let mut differing = Vec::new();
    for out in runs {
        let again = run(out.config.clone(), Box::new(RuleBackend)).unwrap();
        if log_bytes(&again.logs) != log_bytes(&out.logs) {
            differing.push(out.config.name.clone());
        }
    }
    let secs = first_pass + started.elapsed().as_secs_f64();
    pass &= differing.is_empty() && secs < 120.0;
    notes.push(format!("{} replays byte-identical, {} differ {differing:?}", runs.len() - differing.len(), differing.len()));
    outcome(pass, format!("{}; {secs:.1} s", notes.join("; ")))
}

fn corrupted() -> Vec<(&'static str, Result<(), String>)> {
    let d = |s: &str| parse_motion_descriptor(s).map(|_| ()).map_err(|e| e.to_string());
    let f = |s: &str| parse_feedback_json(s).map(|_| ()).map_err(|e| e.to_string());
    let c = |s: &str| parse_formation_csv(s, 4).map(|_| ()).map_err(|e| e.to_string());
    vec![
        ("empty descriptor", d("")),
        ("fenced nothing", d("```json\n```")),
        ("prose before JSON", d(r#"Sure! {"mode":"track","groups":["car1"]}"#)),
        ("prose after JSON", d(r#"{"mode":"stationary"} Hope this helps."#)),
        ("truncated object", d(r#"{"mode":"track","groups":["car1""#)),
        ("unknown mode", d(r#"{"mode":"hover"}"#)),
        ("unknown shape", d(r#"{"mode":"stationary","formation":"hexagon"}"#)),
        ("spacing as text", d(r#"{"mode":"stationary","spacing":"two"}"#)),
        ("negative spacing", d(r#"{"mode":"stationary","spacing":-2}"#)),
        ("two objects", d(r#"{"mode":"stationary"}{"mode":"track"}"#)),
        ("track without targets", d(r#"{"mode":"track","tracking":true,"groups":[]}"#)),
        ("feedback as string", f(r#"{"feedback":"true","reason":"x"}"#)),
        ("feedback missing reason", f(r#"{"feedback":false}"#)),
        ("feedback extra key", f(r#"{"feedback":false,"reason":"x","score":3}"#)),
        ("feedback array", f(r#"[{"feedback":false,"reason":"x"}]"#)),
        ("csv wrong header", c("idx,x,y,z\n0,0,0,0\n1,1,0,0\n2,0,1,0\n3,1,1,0")),
        ("csv three rows", c("id,x,y,z\n0,0,0,0\n1,1,0,0\n2,0,1,0")),
        ("csv duplicate id", c("id,x,y,z\n0,0,0,0\n1,1,0,0\n1,0,1,0\n3,1,1,0")),
        ("csv non-numeric", c("id,x,y,z\n0,0,0,0\n1,one,0,0\n2,0,1,0\n3,1,1,0")),
        ("csv shared point", c("id,x,y,z\n0,0,0,0\n1,1,0,0\n2,1,0,0\n3,1,1,0")),
    ]
}

fn parsers() -> Outcome {
    let mut failures = Vec::new();
    let grid_ok = parse_feedback_json(r#"{"feedback": false, "reason": "Grid matches user request."}"#)
        .is_ok_and(|v| v.consistent && v.reason == "Grid matches user request.");
    let revise = parse_feedback_json(r#"{"feedback": true, "reason": "One cluster but multiple groups requested."}"#)
        .is_ok_and(|v| !v.consistent && v.reason == "One cluster but multiple groups requested.");
    let mut expected = Intent::new(Mode::Track);
    expected.groups = vec![GroupSpec::target(0), GroupSpec::target(1)];
    expected.formation = Shape::Circle;
    expected.even_split = true;
    expected.spacing = 3.0;
    let schema = parse_motion_descriptor(
        r#"{"mode":"track","tracking":true,"groups":["car1","car2"],"formation":"circle","even_split":true,"spacing":3}"#,
    )
    .is_ok_and(|i| i == expected);
    let csv = parse_formation_csv("id,x,y,z\n0,-1,-1,5\n1,1,-1,5\n2,-1,1,5\n3,1,1,5\n", 4).is_ok_and(|t| {
        t.offsets
            == [Vec3::new(-1.0, -1.0, 5.0), Vec3::new(1.0, -1.0, 5.0), Vec3::new(-1.0, 1.0, 5.0), Vec3::new(1.0, 1.0, 5.0)]
    });
    for (name, ok) in [("feedback false", grid_ok), ("feedback true", revise), ("descriptor", schema), ("4-row csv", csv)] {
        if !ok {
            failures.push(name.to_string());
        }
    }
    let bad = corrupted();
    let accepted: Vec<&str> = bad.iter().filter(|(_, r)| r.is_ok()).map(|(n, _)| *n).collect();
    failures.extend(accepted.iter().map(|n| format!("accepted corrupted `{n}`")));
    outcome(
        failures.is_empty(),
        format!(
            "4 example outputs, {} corrupted fixtures rejected with typed errors{}",
            bad.len() - accepted.len(),
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}

fn live_equivalence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (live_dir, headless_dir) = (dir.path().join("live"), dir.path().join("headless"));
    let config = scenario("chase-1").unwrap();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let live = runtime.block_on(common::scripted_live_run(config.clone(), &live_dir));
    run_headless(config, Box::new(RuleBackend), &headless_dir).unwrap();
    let differing: Vec<&str> = [TRAJECTORY_FILE, SUPERVISION_FILE, EVENTS_FILE]
        .into_iter()
        .filter(|f| common::read(&live_dir, f) != common::read(&headless_dir, f))
        .collect();
    let accepted = live.acks.iter().filter(|a| a.accepted).count();
    outcome(
        differing.is_empty() && accepted == live.acks.len(),
        format!(
            "chase-1 over WebSocket, {accepted}/{} scripted commands accepted, {} messages; differing files {differing:?}",
            live.acks.len(),
            live.messages.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut lines: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut report = |n: u8, name: &'static str, o: Outcome| {
        println!("{} [{n:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        lines.push((n, name, o));
    };

    report(1, "spectral", spectral());
    let (t1, t1_range) = tracking();
    report(2, "tracking envelope", t1);

    let started = Instant::now();
    let runs: Vec<RunOutput> =
        builtin_scenarios().into_iter().map(|c| run(c, Box::new(RuleBackend)).unwrap()).collect();
    let first_pass = started.elapsed().as_secs_f64();
    report(3, "jump identity", jump_identity(&runs));
    let (cor, cor_range) = loop_closure();
    report(4, "grounding-error loop closure", cor);
    report(5, "markov chain", markov());
    let (hor, hor_range) = horizon();
    report(6, "horizon bound", hor);
    report(
        7,
        "range residual",
        range_residual(&runs, &[("tracking", t1_range), ("loop closure", cor_range), ("horizon", hor_range)]),
    );
    report(8, "scenario structure", scenario_structure(&runs, first_pass));
    report(9, "prompt-contract parsers", parsers());
    report(10, "headless/live equivalence", live_equivalence());

    let failed = lines.iter().filter(|l| !l.2.pass).count();
    println!("{} of {} criteria pass", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
