//! Chat-completion transports: live HTTP, record (live + persist), replay
//! (fixtures only, no network), and a scripted in-memory transport for tests.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::hex_encode;
use crate::similarity::Temperature;

/// One outgoing paraphrase request with the identity needed for fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    /// Registry id, used for fixture keying and logs.
    pub model_id: String,
    /// Model name sent on the wire.
    pub api_name: String,
    /// Campaign temperature for this request (always known).
    pub temperature: Temperature,
    /// Whether the temperature parameter is included in the body; models
    /// that reject the parameter get requests without it.
    pub send_temperature: bool,
    /// Include `"reasoning": "none"` in the body.
    pub reasoning_none: bool,
    pub prompt: String,
    pub chapter: String,
    pub round: usize,
}

impl ChatRequest {
    /// Exact JSON body sent on the wire. Key order is serde_json's sorted
    /// object order, so the body is byte-deterministic.
    pub fn body_json(&self) -> String {
        let mut body = json!({
            "model": self.api_name,
            "messages": [{"role": "user", "content": self.prompt}],
        });
        let map = body.as_object_mut().expect("body is an object");
        if self.send_temperature {
            map.insert("temperature".into(), json!(self.temperature.as_f64()));
        }
        if self.reasoning_none {
            map.insert("reasoning".into(), json!("none"));
        }
        body.to_string()
    }

    /// Fixture key: fingerprint of (model, temperature, round, chapter).
    pub fn fixture_key(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model_id.as_bytes());
        hasher.update([0x1f, u8::from(self.temperature)]);
        hasher.update([0x1f]);
        hasher.update(self.round.to_le_bytes());
        hasher.update([0x1f]);
        hasher.update(self.chapter.as_bytes());
        hex_encode(&hasher.finalize())[..32].to_string()
    }

    pub fn fixture_file(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.json", self.fixture_key()))
    }
}

/// A completed exchange: the raw response body and the extracted text.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub body: String,
    pub text: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    /// Worth retrying: network trouble, rate limits, server errors.
    #[error("transient transport error: {0}")]
    Transient(String),
    /// Retrying will not help: auth, bad request, unparseable response.
    #[error("permanent transport error: {0}")]
    Permanent(String),
    /// Replay mode has no fixture for this request.
    #[error("no fixture for request at {path}")]
    FixtureMissing { path: PathBuf },
}

/// Extract the assistant text from a chat-completion response body.
pub fn parse_response_body(body: &str) -> Result<String, TransportError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| TransportError::Permanent(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(String::from)
        .ok_or_else(|| {
            TransportError::Permanent("response lacks choices[0].message.content".into())
        })
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;

    /// True when the transport never opens a network connection; the client
    /// skips inter-request pacing for offline transports.
    fn is_offline(&self) -> bool {
        false
    }
}

/// Real HTTPS transport. The credential is read from the named environment
/// variable at send time and never logged or echoed.
pub struct LiveTransport {
    agent: ureq::Agent,
    endpoint: String,
    credential_env: String,
}

impl LiveTransport {
    pub fn new(endpoint: impl Into<String>, credential_env: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
            endpoint: endpoint.into(),
            credential_env: credential_env.into(),
        }
    }
}

impl ChatTransport for LiveTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let credential = std::env::var(&self.credential_env).map_err(|_| {
            TransportError::Permanent(format!(
                "credential environment variable {} is not set",
                self.credential_env
            ))
        })?;
        let result = self
            .agent
            .post(&self.endpoint)
            .header("authorization", &format!("Bearer {credential}"))
            .header("content-type", "application/json")
            .send(request.body_json());
        let mut response = match result {
            Ok(response) => response,
            Err(e) => return Err(TransportError::Transient(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Transient(format!("reading response body: {e}")))?;
        match status {
            200..=299 => {
                let text = parse_response_body(&body)?;
                Ok(ChatResponse { body, text })
            }
            429 | 500..=599 => Err(TransportError::Transient(format!("HTTP {status}"))),
            other => Err(TransportError::Permanent(format!("HTTP {other}: {body}"))),
        }
    }
}

/// Wraps another transport and persists every response body as a fixture.
pub struct RecordTransport<T: ChatTransport> {
    inner: T,
    dir: PathBuf,
}

impl<T: ChatTransport> RecordTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }
}

impl<T: ChatTransport> ChatTransport for RecordTransport<T> {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let response = self.inner.send(request)?;
        std::fs::create_dir_all(&self.dir)
            .and_then(|_| std::fs::write(request.fixture_file(&self.dir), &response.body))
            .map_err(|e| TransportError::Permanent(format!("writing fixture: {e}")))?;
        Ok(response)
    }

    fn is_offline(&self) -> bool {
        self.inner.is_offline()
    }
}

/// Serves responses from fixture files and never touches the network.
pub struct ReplayTransport {
    dir: PathBuf,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl ChatTransport for ReplayTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let path = request.fixture_file(&self.dir);
        let body = std::fs::read_to_string(&path)
            .map_err(|_| TransportError::FixtureMissing { path })?;
        let text = parse_response_body(&body)?;
        Ok(ChatResponse { body, text })
    }

    fn is_offline(&self) -> bool {
        true
    }
}

/// Scripted transport for tests: responds via a closure, can inject a number
/// of transient failures per request key, and logs every send.
pub struct ScriptedTransport {
    respond: Box<dyn Fn(&ChatRequest) -> String + Send + Sync>,
    transient_failures: Mutex<std::collections::HashMap<String, usize>>,
    log: Mutex<Vec<ChatRequest>>,
    offline: bool,
}

impl ScriptedTransport {
    /// Responds to every request with `respond(request)` as the assistant
    /// text, wrapped in a provider-shaped body.
    pub fn new(respond: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        Self {
            respond: Box::new(respond),
            transient_failures: Mutex::new(Default::default()),
            log: Mutex::new(Vec::new()),
            offline: false,
        }
    }

    pub fn offline(mut self) -> Self {
        self.offline = true;
        self
    }

    /// The next `count` sends for this request will fail transiently.
    pub fn inject_transient_failures(&self, request: &ChatRequest, count: usize) {
        self.transient_failures
            .lock()
            .unwrap()
            .insert(request.fixture_key(), count);
    }

    /// Every request sent, in order.
    pub fn sent(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl ChatTransport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.log.lock().unwrap().push(request.clone());
        {
            let mut failures = self.transient_failures.lock().unwrap();
            if let Some(remaining) = failures.get_mut(&request.fixture_key()) {
                if *remaining > 0 {
                    *remaining -= 1;
                    return Err(TransportError::Transient("injected failure".into()));
                }
            }
        }
        let text = (self.respond)(request);
        let body = json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
            .to_string();
        let text = parse_response_body(&body).expect("scripted body is well-formed");
        Ok(ChatResponse { body, text })
    }

    fn is_offline(&self) -> bool {
        self.offline
    }
}
