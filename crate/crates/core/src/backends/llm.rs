//! Chat-completion adapter for the three prompt contracts, with record and replay.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::parse::{parse_feedback_json, parse_formation_csv, parse_motion_descriptor};
use super::prompts::{PromptName, PromptTemplate};
use super::{BackendError, CheckRequest, Grounded, GroundingContext, SupervisorBackend};
use crate::supervision::{FormationTemplate, Mode, Shape, VerificationVerdict};

pub const ENV_URL: &str = "EDGEFORM_LLM_URL";
pub const ENV_KEY: &str = "EDGEFORM_LLM_KEY";
pub const ENV_MODEL: &str = "EDGEFORM_LLM_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            key: None,
            model: model.into(),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
        }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(ENV_URL).map_err(|_| BackendError::Config(format!("{ENV_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into());
        let mut cfg = Self::new(url, model);
        cfg.key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

/// One recorded exchange; replay files hold one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request: Value,
    pub response: String,
    pub timestamp: f64,
}

#[derive(Debug)]
pub enum Transport {
    Live(EndpointConfig),
    /// Live calls, each appended to `path`.
    Record { endpoint: EndpointConfig, path: PathBuf },
    /// Served from a recording, in order; the request must match.
    Replay { entries: Vec<ReplayEntry>, cursor: usize, path: PathBuf },
}

impl Transport {
    pub fn replay(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref().to_path_buf();
        let reader = BufReader::new(File::open(&path)?);
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ReplayEntry = serde_json::from_str(&line)
                .map_err(|e| BackendError::Replay(format!("{}:{}: {e}", path.display(), n + 1)))?;
            entries.push(e);
        }
        Ok(Transport::Replay { entries, cursor: 0, path })
    }

    pub fn record(endpoint: EndpointConfig, path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref().to_path_buf();
        File::create(&path)?;
        Ok(Transport::Record { endpoint, path })
    }
}

fn request_body(model: &str, prompt: &str) -> Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    })
}

fn completion_text(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "response has no choices[0].message.content".into())
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

fn post_once(agent: &ureq::Agent, cfg: &EndpointConfig, body: &str) -> Result<String, Attempt> {
    let mut req = agent.post(&cfg.url).header("Content-Type", "application/json");
    if let Some(k) = &cfg.key {
        req = req.header("Authorization", format!("Bearer {k}"));
    }
    let mut resp = req.send(body).map_err(|e| Attempt::Retry(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
    match status {
        200..=299 => completion_text(&text).map_err(Attempt::Fatal),
        429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
        _ => Err(Attempt::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))),
    }
}

fn post_with_retries(cfg: &EndpointConfig, body: &Value) -> Result<String, BackendError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let body = body.to_string();
    let mut attempts = 0;
    loop {
        attempts += 1;
        match post_once(&agent, cfg, &body) {
            Ok(text) => return Ok(text),
            Err(Attempt::Fatal(message)) => return Err(BackendError::Transport { attempts, message }),
            Err(Attempt::Retry(message)) if attempts > cfg.max_retries => {
                return Err(BackendError::Transport { attempts, message })
            }
            Err(Attempt::Retry(_)) => thread::sleep(cfg.backoff_base * 2u32.saturating_pow(attempts - 1)),
        }
    }
}

/// Renders `template` and returns the model's raw text.
pub fn llm_call(
    template: &PromptTemplate,
    fills: &BTreeMap<&str, String>,
    transport: &mut Transport,
) -> Result<String, BackendError> {
    let prompt = template.render(fills)?;
    match transport {
        Transport::Live(cfg) => post_with_retries(cfg, &request_body(&cfg.model, &prompt)),
        Transport::Record { endpoint, path } => {
            let request = request_body(&endpoint.model, &prompt);
            let response = post_with_retries(endpoint, &request)?;
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
            let entry = ReplayEntry { request, response: response.clone(), timestamp };
            let mut f = OpenOptions::new().append(true).create(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&entry).expect("entry serializes"))?;
            Ok(response)
        }
        Transport::Replay { entries, cursor, path } => {
            let entry = entries.get(*cursor).ok_or_else(|| {
                BackendError::Replay(format!("{} exhausted after {} entries", path.display(), entries.len()))
            })?;
            if entry.request.get("messages") != request_body("", &prompt).get("messages") {
                return Err(BackendError::Replay(format!("entry {} does not match the rendered prompt", *cursor + 1)));
            }
            *cursor += 1;
            Ok(entry.response.clone())
        }
    }
}

/// Backend that sends every operation to a chat endpoint.
#[derive(Debug)]
pub struct LlmBackend {
    pub transport: Transport,
}

impl LlmBackend {
    pub fn new(transport: Transport) -> Self {
        Self { transport }
    }
}

impl SupervisorBackend for LlmBackend {
    /// The same for every transport, so a replayed run logs exactly what the recorded one did.
    fn name(&self) -> &'static str {
        "llm"
    }

    fn ground(&mut self, text: &str, ctx: &GroundingContext<'_>) -> Result<Grounded, BackendError> {
        let fills = BTreeMap::from([("USER_TEXT", text.to_string())]);
        let raw = llm_call(PromptTemplate::get(PromptName::MotionDescriptor), &fills, &mut self.transport)?;
        let mut intent = parse_motion_descriptor(&raw)?;
        if intent.mode == Mode::Search {
            intent.search_region = intent.search_region.or(ctx.default_region);
            intent.search_target = intent.search_target.or(ctx.search_target);
        }
        Ok(Grounded { intent, warnings: Vec::new(), recognized: true })
    }

    fn formation(&mut self, shape: Shape, count: usize, spacing: f64, height: f64) -> Result<FormationTemplate, BackendError> {
        let fills = BTreeMap::from([
            ("SHAPE", shape.to_string()),
            ("N", count.to_string()),
            ("SPACING", spacing.to_string()),
            ("HEIGHT", height.to_string()),
        ]);
        let raw = llm_call(PromptTemplate::get(PromptName::FormationInstruction), &fills, &mut self.transport)?;
        let mut t = parse_formation_csv(&raw, count)?;
        t.shape = Some(shape);
        Ok(t)
    }

    fn check(&mut self, request: &CheckRequest<'_>) -> Result<VerificationVerdict, BackendError> {
        let fills = BTreeMap::from([
            ("USER_TEXT", request.cmd_text.to_string()),
            ("FEEDBACK_CSV", request.feedback_csv.clone()),
        ]);
        let raw = llm_call(PromptTemplate::get(PromptName::AutoCorrection), &fills, &mut self.transport)?;
        Ok(parse_feedback_json(&raw)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned HTTP responses in order, one per connection.
    fn fake_server(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for (status, body) in replies {
                let Ok((mut sock, _)) = listener.accept() else { return };
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = sock.read(&mut chunk).unwrap_or(0);
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(h) = text.find("\r\n\r\n") {
                        let len = text[..h]
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if buf.len() >= h + 4 + len {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = sock.write_all(reply.as_bytes());
            }
        });
        (url, hits)
    }

    fn completion(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    fn endpoint(url: String) -> EndpointConfig {
        EndpointConfig { backoff_base: Duration::from_millis(1), timeout: Duration::from_secs(5), ..EndpointConfig::new(url, "m") }
    }

    fn ctx_state() -> crate::dynamics::SwarmState {
        crate::dynamics::SwarmState::new(0.0, vec![crate::Vec3::zeros(); 4], vec![crate::Vec3::zeros()])
    }

    #[test]
    fn retries_then_succeeds_and_replay_matches() {
        let reply = completion(r#"{"mode":"track","tracking":true,"groups":["car1"],"formation":"circle","even_split":false,"spacing":2}"#);
        let (url, hits) = fake_server(vec![(503, "{}".into()), (200, reply)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        let mut live = LlmBackend::new(Transport::record(endpoint(url), &path).unwrap());
        let state = ctx_state();
        let ctx = GroundingContext { state: &state, stored: None, default_region: None, search_target: None };
        let a = live.ground("track car1 in a circle", &ctx).unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 2);
        assert_eq!(a.intent.formation, Shape::Circle);

        let mut replay = LlmBackend::new(Transport::replay(&path).unwrap());
        let b = replay.ground("track car1 in a circle", &ctx).unwrap();
        assert_eq!(a, b);
        assert!(matches!(replay.ground("again", &ctx), Err(BackendError::Replay(_))));
    }

    #[test]
    fn endpoint_down_fails_after_retries() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let mut t = Transport::Live(EndpointConfig { max_retries: 2, ..endpoint(url) });
        let fills = BTreeMap::from([("USER_TEXT", "hover".to_string())]);
        let err = llm_call(PromptTemplate::get(PromptName::MotionDescriptor), &fills, &mut t).unwrap_err();
        assert!(matches!(err, BackendError::Transport { attempts: 3, .. }));
    }

    #[test]
    fn malformed_output_is_a_parse_error() {
        let (url, _) = fake_server(vec![(200, completion("Sure! id,x,y,z"))]);
        let mut b = LlmBackend::new(Transport::Live(endpoint(url)));
        assert!(matches!(b.formation(Shape::Grid, 4, 2.0, 0.0), Err(BackendError::Parse(_))));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits) = fake_server(vec![(400, "{}".into()), (200, completion("{}"))]);
        let mut t = Transport::Live(endpoint(url));
        let fills = BTreeMap::from([("USER_TEXT", "hover".to_string())]);
        let err = llm_call(PromptTemplate::get(PromptName::MotionDescriptor), &fills, &mut t).unwrap_err();
        assert!(matches!(err, BackendError::Transport { attempts: 1, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }
}
