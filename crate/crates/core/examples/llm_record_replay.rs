//! Records a short mission against a local chat-completion stand-in, then replays it offline.
//!
//! The stand-in answers each of the three prompt kinds with well-formed output, so the run
//! exercises prompt rendering, HTTP transport, parsing and the replay file end to end.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use serde_json::{json, Value};

use edgeform::backends::{EndpointConfig, LlmBackend, Transport};
use edgeform::scenario::builtin::hover;
use edgeform::scenario::run;
use edgeform::supervision::{formation_offsets, Command, Shape};

fn field<'a>(prompt: &'a str, label: &str) -> &'a str {
    prompt.lines().find_map(|l| l.strip_prefix(label)).map(str::trim).unwrap_or("")
}

fn answer(prompt: &str) -> String {
    if prompt.contains("instruction parser") {
        r#"{"mode":"stationary","tracking":false,"groups":["car1"],"formation":"square","even_split":false,"spacing":2}"#.into()
    } else if prompt.contains("geometry generator") {
        let shape: Shape = field(prompt, "Formation shape:").parse().unwrap_or(Shape::Grid);
        let n: usize = field(prompt, "Number of drones N:").parse().unwrap_or(1);
        let spacing: f64 = field(prompt, "Spacing:").parse().unwrap_or(1.0);
        let height: f64 = field(prompt, "Height offset z:").parse().unwrap_or(0.0);
        let t = formation_offsets(shape, n, spacing, height).expect("valid formation request");
        let mut csv = String::from("id,x,y,z\n");
        for (i, o) in t.offsets.iter().enumerate() {
            csv += &format!("{i},{},{},{}\n", o.x, o.y, o.z);
        }
        format!("```csv\n{csv}```")
    } else {
        r#"{"feedback": false, "reason": "Square matches the request."}"#.into()
    }
}

fn read_request(sock: &mut impl Read) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        let n = sock.read(&mut chunk).unwrap_or(0);
        buf.extend_from_slice(&chunk[..n]);
        let text = String::from_utf8_lossy(&buf);
        if let Some(h) = text.find("\r\n\r\n") {
            let len = text[..h]
                .lines()
                .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").and_then(|v| v.trim().parse().ok()))
                .unwrap_or(0usize);
            if buf.len() >= h + 4 + len {
                return text[h + 4..].to_string();
            }
        }
        if n == 0 {
            return String::new();
        }
    }
}

/// Minimal chat-completion endpoint on an ephemeral port.
fn stand_in() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    thread::spawn(move || {
        for mut sock in listener.incoming().flatten() {
            let body: Value = serde_json::from_str(&read_request(&mut sock)).unwrap_or(Value::Null);
            let prompt = body.pointer("/messages/0/content").and_then(Value::as_str).unwrap_or("");
            let reply = json!({"choices": [{"message": {"role": "assistant", "content": answer(prompt)}}]}).to_string();
            let _ = write!(
                sock,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    url
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let recording = dir.path().join("llm_replay.jsonl");
    let mut config = hover(6, Command::Text("Hold a square around the parked car.".into()));
    config.duration = 5.0;

    let endpoint = EndpointConfig::new(stand_in(), "stand-in");
    let recorded = run(config.clone(), Box::new(LlmBackend::new(Transport::record(endpoint, &recording).unwrap()))).unwrap();
    let exchanges = std::fs::read_to_string(&recording).unwrap().lines().count();
    println!("recorded {exchanges} exchanges to {}", recording.display());

    let replayed = run(config, Box::new(LlmBackend::new(Transport::replay(&recording).unwrap()))).unwrap();
    println!("trajectory rows: {}", replayed.logs.trajectory.len());
    println!("replayed logs identical to the recorded run: {}", recorded.logs == replayed.logs);
}
