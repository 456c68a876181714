mod common;

use std::time::Duration;

use common::{read, scripted_live_run, Client};
use edgeform::backends::RuleBackend;
use edgeform::scenario::{builtin::hover, scenario, EVENTS_FILE, SUPERVISION_FILE, TRAJECTORY_FILE};
use edgeform::supervision::Command;
use edgeform_station::cli::run_headless;
use edgeform_station::wire::{Body, ControlAction, Phase};
use edgeform_station::{serve, ServeOptions, Session};

fn hover_session(duration: f64) -> Session {
    let mut cfg = hover(6, Command::Text("Hold a grid formation.".into()));
    cfg.duration = duration;
    Session::new(cfg, Box::new(RuleBackend), None).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn live_chase_matches_headless_logs() {
    let dir = tempfile::tempdir().unwrap();
    let (live_dir, headless_dir) = (dir.path().join("live"), dir.path().join("headless"));
    let config = scenario("chase-1").unwrap();
    let live = scripted_live_run(config.clone(), &live_dir).await;
    run_headless(config, Box::new(RuleBackend), &headless_dir).unwrap();

    assert_eq!(live.session.phase(), Phase::Finished);
    assert_eq!(live.acks.iter().map(|a| a.applied_at).collect::<Vec<_>>(), vec![Some(0.0), Some(45.0)]);
    assert!(live.acks.iter().all(|a| a.accepted && a.intent.is_some()));
    for f in [TRAJECTORY_FILE, SUPERVISION_FILE, EVENTS_FILE] {
        assert!(read(&live_dir, f) == read(&headless_dir, f), "{f} differs");
    }
    let seqs: Vec<u64> = live.messages.iter().map(|m| m.seq).collect();
    assert!(seqs.windows(2).all(|w| w[1] > w[0]));
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_input_gets_errors_and_leaves_mission_alone() {
    let server = serve(hover_session(30.0), "127.0.0.1:0", ServeOptions { start_paused: true, ..ServeOptions::default() })
        .await
        .unwrap();
    let mut c = Client::connect(server.local_addr()).await;
    let ack = c.command("zzkq vrrp").await;
    assert!(!ack.accepted && ack.error.is_some());
    c.send_raw("{not json").await;
    let reply = loop {
        let m = c.recv().await.unwrap();
        if let Body::Error(e) = m.body {
            break e;
        }
    };
    assert!(reply.message.contains("malformed"));
    assert!(matches!(c.request(Body::Control(edgeform_station::wire::Control::request(ControlAction::Pause))).await, Body::Error(_)));
    let status = c.control(ControlAction::Step).await;
    assert_eq!(status.t, 1.0);
    assert_eq!(status.pending_commands, 0);
    server.stop();
    let session = server.wait().await.unwrap();
    assert_eq!(session.phase(), Phase::Finished);
    assert!(session.simulation().logs().events_of("command_rejected").next().is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn two_clients_see_the_same_snapshots() {
    let server = serve(hover_session(3.0), "127.0.0.1:0", ServeOptions { start_paused: true, ..ServeOptions::default() })
        .await
        .unwrap();
    let mut a = Client::connect(server.local_addr()).await;
    let mut b = Client::connect(server.local_addr()).await;
    // both connected before anything moves
    while a.set_time_scale(1.0).await.clients < 2 {}
    tokio::time::sleep(Duration::from_millis(100)).await;
    a.control(ControlAction::Resume).await;
    a.drain().await;
    b.drain().await;
    server.wait().await.unwrap();
    let snaps = |c: &Client| -> Vec<f64> {
        c.received
            .iter()
            .filter_map(|m| match &m.body {
                Body::Snapshot(s) if s.status.phase != Phase::Paused => Some(s.t),
                _ => None,
            })
            .collect()
    };
    let (sa, sb) = (snaps(&a), snaps(&b));
    assert!(!sa.is_empty());
    assert_eq!(sa, sb);
    assert_eq!(*sa.last().unwrap(), 3.0);
}
