//! WebSocket service around a [`Session`].
//!
//! A blocking pacing loop owns the session. Connections talk to it through a request queue
//! and receive snapshots and events from a broadcast channel, so no client can stall the loop.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::stream::FuturesOrdered;
use futures::{SinkExt, StreamExt};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::session::Session;
use crate::wire::{Body, Control, ControlAction, ErrorPayload, Phase, WireMessage};
use crate::StationError;

const UPDATE_CAPACITY: usize = 256;
/// Longest wall-clock gap the pacer will make up in one iteration.
const MAX_CATCH_UP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    pub snapshot_hz: f64,
    pub time_scale: f64,
    pub start_paused: bool,
    /// Stop serving once the mission ends.
    pub exit_on_finish: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { snapshot_hz: 20.0, time_scale: 1.0, start_paused: false, exit_on_finish: true }
    }
}

struct Request {
    body: Body,
    reply: oneshot::Sender<Body>,
}

#[derive(Clone)]
struct AppState {
    requests: mpsc::UnboundedSender<Request>,
    updates: Arc<broadcast::Receiver<Body>>,
    clients: Arc<AtomicUsize>,
}

pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    pacer: JoinHandle<Result<Session, StationError>>,
    http: JoinHandle<()>,
    http_stop: oneshot::Sender<()>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks the pacing loop to end the mission now.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Waits for the mission to end, then closes the listener.
    pub async fn wait(self) -> Result<Session, StationError> {
        let session = self.pacer.await.map_err(|e| StationError::Pacer(e.to_string()))?;
        let _ = self.http_stop.send(());
        let _ = self.http.await;
        session
    }
}

/// Binds `addr` and starts pacing `session`; the WebSocket endpoint is `/ws`.
pub async fn serve(session: Session, addr: &str, options: ServeOptions) -> Result<Server, StationError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| StationError::Bind { addr: addr.to_string(), source })?;
    let local = listener.local_addr()?;
    let (req_tx, req_rx) = mpsc::unbounded_channel();
    let (up_tx, up_rx) = broadcast::channel(UPDATE_CAPACITY);
    let clients = Arc::new(AtomicUsize::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let state = AppState { requests: req_tx, updates: Arc::new(up_rx), clients: clients.clone() };

    let app = Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(state);
    let (http_stop, http_rx) = oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = http_rx.await;
            })
            .await;
    });
    let pacer = {
        let stop = stop.clone();
        tokio::task::spawn_blocking(move || pace(session, req_rx, up_tx, clients, stop, options))
    };
    Ok(Server { addr: local, stop, pacer, http, http_stop })
}

fn handle(session: &mut Session, body: Body, clients: usize) -> Body {
    let error = |e: StationError| Body::Error(ErrorPayload { message: e.to_string() });
    match body {
        Body::Command(cmd) => session.submit(cmd).map(Body::CommandAck).unwrap_or_else(error),
        Body::Control(c) => match session.control(&c) {
            Ok(mut status) => {
                status.clients = clients;
                Body::Control(Control { action: c.action, time_scale: c.time_scale, status: Some(status) })
            }
            Err(e) => error(e),
        },
        _ => error(StationError::Request("clients may send only command and control messages".into())),
    }
}

fn publish(session: &mut Session, updates: &broadcast::Sender<Body>, clients: usize) {
    let snap = session.snapshot(clients);
    for e in &snap.events_since_last {
        let _ = updates.send(Body::Event(e.clone()));
    }
    let _ = updates.send(Body::Snapshot(Box::new(snap)));
}

fn pace(
    mut session: Session,
    mut requests: mpsc::UnboundedReceiver<Request>,
    updates: broadcast::Sender<Body>,
    clients: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    options: ServeOptions,
) -> Result<Session, StationError> {
    let mut scale = Control::request(ControlAction::SetTimeScale);
    scale.time_scale = Some(options.time_scale);
    session.control(&scale)?;
    if options.start_paused {
        session.control(&Control::request(ControlAction::Pause))?;
    } else {
        session.start()?;
    }
    let period = Duration::from_secs_f64(1.0 / options.snapshot_hz.max(1e-3));
    let mut last = Instant::now();
    let mut deadline = last;
    loop {
        while let Ok(req) = requests.try_recv() {
            let reply = handle(&mut session, req.body, clients.load(Ordering::SeqCst));
            let _ = req.reply.send(reply);
        }
        let now = Instant::now();
        let elapsed = (now - last).as_secs_f64().min(MAX_CATCH_UP);
        last = now;
        if let Err(e) = session.advance(elapsed) {
            let _ = updates.send(Body::Error(ErrorPayload { message: e.to_string() }));
            session.finish()?;
            publish(&mut session, &updates, clients.load(Ordering::SeqCst));
            return Err(e);
        }
        if stop.load(Ordering::SeqCst) {
            session.finish()?;
        }
        publish(&mut session, &updates, clients.load(Ordering::SeqCst));
        if session.phase() == Phase::Finished && (options.exit_on_finish || stop.load(Ordering::SeqCst)) {
            return Ok(session);
        }
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else {
            deadline = now;
        }
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: AppState) {
    state.clients.fetch_add(1, Ordering::SeqCst);
    let (mut sink, mut stream) = socket.split();
    let mut updates = state.updates.resubscribe();
    let mut replies = FuturesOrdered::new();
    let mut seq = 0u64;
    loop {
        let body = tokio::select! {
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => match WireMessage::parse(&text) {
                    Ok(msg) => {
                        let (tx, rx) = oneshot::channel();
                        if state.requests.send(Request { body: msg.body, reply: tx }).is_err() {
                            Body::Error(ErrorPayload { message: "mission has ended".into() })
                        } else {
                            replies.push_back(rx);
                            continue;
                        }
                    }
                    Err(e) => Body::Error(ErrorPayload { message: format!("malformed message: {e}") }),
                },
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => continue,
            },
            Some(reply) = replies.next(), if !replies.is_empty() => match reply {
                Ok(body) => body,
                Err(_) => Body::Error(ErrorPayload { message: "mission has ended".into() }),
            },
            update = updates.recv() => match update {
                Ok(body) => body,
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
        };
        seq += 1;
        let text = WireMessage { seq, body }.to_json();
        if sink.send(Message::Text(text.into())).await.is_err() {
            break;
        }
    }
    let _ = sink.send(Message::Close(None)).await;
    state.clients.fetch_sub(1, Ordering::SeqCst);
}
