//! A scripted console client for live-session tests.
#![allow(dead_code)]

use std::path::Path;

use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use edgeform::backends::RuleBackend;
use edgeform::scenario::ScenarioConfig;
use edgeform::supervision::Command;
use edgeform_station::wire::{Body, CommandAck, Control, ControlAction, Status};
use edgeform_station::{serve, ServeOptions, Session, WireMessage};

pub type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub struct Client {
    pub ws: Socket,
    next_seq: u64,
    /// Every message received, in order.
    pub received: Vec<WireMessage>,
}

impl Client {
    pub async fn connect(addr: std::net::SocketAddr) -> Self {
        let (ws, _) = connect_async(format!("ws://{addr}/ws")).await.expect("connect");
        Self { ws, next_seq: 0, received: Vec::new() }
    }

    pub async fn send(&mut self, body: Body) {
        self.next_seq += 1;
        let text = WireMessage { seq: self.next_seq, body }.to_json();
        self.ws.send(Message::Text(text.into())).await.expect("send");
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_string().into())).await.expect("send");
    }

    /// Next message, or `None` once the server closes.
    pub async fn recv(&mut self) -> Option<WireMessage> {
        loop {
            match self.ws.next().await? {
                Ok(Message::Text(t)) => {
                    let m = WireMessage::parse(&t).expect("server sends valid messages");
                    self.received.push(m.clone());
                    return Some(m);
                }
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => continue,
            }
        }
    }

    /// Sends a request and returns the first reply, skipping the broadcast stream.
    pub async fn request(&mut self, body: Body) -> Body {
        self.send(body).await;
        loop {
            let m = self.recv().await.expect("reply before close");
            if matches!(m.body, Body::CommandAck(_) | Body::Control(_) | Body::Error(_)) {
                return m.body;
            }
        }
    }

    pub async fn control(&mut self, action: ControlAction) -> Status {
        match self.request(Body::Control(Control::request(action))).await {
            Body::Control(c) => c.status.expect("acks carry status"),
            other => panic!("control {action:?} failed: {other:?}"),
        }
    }

    pub async fn set_time_scale(&mut self, scale: f64) -> Status {
        let mut c = Control::request(ControlAction::SetTimeScale);
        c.time_scale = Some(scale);
        match self.request(Body::Control(c)).await {
            Body::Control(c) => c.status.expect("acks carry status"),
            other => panic!("set_time_scale failed: {other:?}"),
        }
    }

    pub async fn command(&mut self, text: &str) -> CommandAck {
        match self.request(Body::Command(Command::Text(text.into()))).await {
            Body::CommandAck(a) => a,
            other => panic!("unexpected reply {other:?}"),
        }
    }

    pub async fn drain(&mut self) {
        while self.recv().await.is_some() {}
    }
}

pub struct LiveRun {
    pub session: Session,
    pub acks: Vec<CommandAck>,
    pub messages: Vec<WireMessage>,
}

/// Serves `config` with its command schedule removed, then replays the schedule over the
/// socket: step to each command time while paused, submit, and finally resume at full speed.
pub async fn scripted_live_run(mut config: ScenarioConfig, out: &Path) -> LiveRun {
    let schedule = std::mem::take(&mut config.commands);
    let session = Session::new(config, Box::new(RuleBackend), Some(out.to_path_buf())).unwrap();
    let options = ServeOptions { snapshot_hz: 200.0, time_scale: 100.0, start_paused: true, exit_on_finish: true };
    let server = serve(session, "127.0.0.1:0", options).await.unwrap();
    let mut client = Client::connect(server.local_addr()).await;
    let mut acks = Vec::new();
    let mut t = 0.0;
    for cmd in &schedule {
        while t < cmd.t - 1e-9 {
            t = client.control(ControlAction::Step).await.t;
        }
        let text = cmd.command.describe();
        acks.push(client.command(&text).await);
    }
    client.control(ControlAction::Resume).await;
    client.drain().await;
    let session = server.wait().await.unwrap();
    LiveRun { session, acks, messages: client.received }
}

pub fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(file).display()))
}
