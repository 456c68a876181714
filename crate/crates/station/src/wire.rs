//! JSON messages exchanged with console clients, one per WebSocket text frame:
//! `{"type": ..., "seq": n, "payload": ...}`.

use serde::{Deserialize, Serialize};

use edgeform::scenario::{EventRecord, NodeKind};
use edgeform::supervision::{Command, Intent};
use edgeform::theory::IntervalRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

impl WireMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Snapshot(Box<Snapshot>),
    Command(Command),
    CommandAck(CommandAck),
    Event(EventRecord),
    /// Client to server: a request. Server to client: the acknowledgement, with `status` set.
    Control(Control),
    Error(ErrorPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Running,
    Paused,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: usize,
    pub kind: NodeKind,
    pub pos: [f64; 3],
    #[serde(rename = "ref")]
    pub reference: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub scenario: String,
    pub phase: Phase,
    pub t: f64,
    pub time_scale: f64,
    pub next_check: f64,
    pub clients: usize,
    pub pending_commands: usize,
}

/// Everything a client needs to draw the scene, without any earlier message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub status: Status,
    pub nodes: Vec<NodeState>,
    pub intent: Option<Intent>,
    pub events_since_last: Vec<EventRecord>,
    pub bound_row: Option<IntervalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub accepted: bool,
    pub text: String,
    /// Supervision instant at which the command takes effect.
    pub applied_at: Option<f64>,
    /// Parsed intent echo; absent when the backend grounds only at the check itself.
    pub intent: Option<Intent>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Pause,
    Resume,
    Step,
    SetTimeScale,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub action: ControlAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
}

impl Control {
    pub fn request(action: ControlAction) -> Self {
        Self { action, time_scale: None, status: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn envelope_layout() {
        let m = WireMessage { seq: 4, body: Body::Control(Control::request(ControlAction::SetTimeScale)) };
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v, json!({"type": "control", "seq": 4, "payload": {"action": "set_time_scale"}}));
        assert_eq!(WireMessage::parse(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn client_command_forms() {
        let text = r#"{"type":"command","seq":1,"payload":{"type":"text","value":"Stop tracking all the targets."}}"#;
        let m = WireMessage::parse(text).unwrap();
        assert_eq!(m.body, Body::Command(Command::Text("Stop tracking all the targets.".into())));
        assert!(WireMessage::parse(r#"{"type":"command","seq":1}"#).is_err());
        assert!(WireMessage::parse(r#"{"type":"launch","seq":1,"payload":{}}"#).is_err());
    }

    #[test]
    fn node_reference_is_named_ref() {
        let n = NodeState { id: 0, kind: NodeKind::Drone, pos: [1.0, 2.0, 3.0], reference: None };
        let v = serde_json::to_value(&n).unwrap();
        assert_eq!(v, json!({"id": 0, "kind": "drone", "pos": [1.0, 2.0, 3.0], "ref": null}));
    }
}
