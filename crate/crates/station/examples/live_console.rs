//! Serves chase-2 on a local port and drives it from a WebSocket client the way a console would.

use futures::{SinkExt, StreamExt};
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;

use edgeform::backends::RuleBackend;
use edgeform::scenario::scenario;
use edgeform::supervision::Command;
use edgeform_station::wire::{Body, Control, ControlAction};
use edgeform_station::{serve, ServeOptions, Session, WireMessage};

#[tokio::main]
async fn main() {
    let out = tempfile::tempdir().unwrap();
    let session = Session::new(scenario("chase-2").unwrap(), Box::new(RuleBackend), Some(out.path().to_path_buf())).unwrap();
    let options = ServeOptions { time_scale: 20.0, snapshot_hz: 10.0, ..ServeOptions::default() };
    let server = serve(session, "127.0.0.1:0", options).await.unwrap();
    println!("serving ws://{}/ws", server.local_addr());

    let (mut ws, _) = connect_async(format!("ws://{}/ws", server.local_addr())).await.unwrap();
    let mut seq = 0;
    let mut send = |body: Body| {
        seq += 1;
        Message::Text(WireMessage { seq, body }.to_json().into())
    };
    ws.send(send(Body::Command(Command::Text("Form a circle around each car.".into())))).await.unwrap();
    ws.send(send(Body::Command(Command::Text("blorp".into())))).await.unwrap();

    let mut snapshots = 0;
    let mut stopped = false;
    while let Some(Ok(msg)) = ws.next().await {
        let Message::Text(text) = msg else { continue };
        let m = WireMessage::parse(&text).unwrap();
        match m.body {
            Body::CommandAck(a) => println!("#{} ack accepted={} applied_at={:?} error={:?}", m.seq, a.accepted, a.applied_at, a.error),
            Body::Event(e) if !matches!(e.kind.as_str(), "verdict" | "jump" | "graph_change" | "reground") => println!("#{} event t={:.1} {}", m.seq, e.t, e.kind),
            Body::Snapshot(s) => {
                snapshots += 1;
                if snapshots % 10 == 0 {
                    println!("#{} snapshot t={:.1} phase={:?} nodes={}", m.seq, s.t, s.status.phase, s.nodes.len());
                }
                if s.t >= 20.0 && !stopped {
                    stopped = true;
                    ws.send(send(Body::Control(Control::request(ControlAction::Stop)))).await.unwrap();
                }
            }
            Body::Control(c) => println!("#{} control {:?} -> {:?}", m.seq, c.action, c.status.map(|s| s.phase)),
            _ => {}
        }
    }
    let session = server.wait().await.unwrap();
    println!("stopped at t={:.1}; {}", session.simulation().time(), session.artifacts().unwrap().report.verdict_line());
}
