//! Chat-completion providers: an HTTP client and a scripted mock.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AgentRole, ProviderConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: &str) -> Self {
        Self { role: role.into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

pub trait Provider: Send {
    fn complete(&mut self, role: AgentRole, request: &ChatRequest) -> Result<String, TransportError>;

    /// Marks `calls` responses for `role` as already consumed. Used when a
    /// run resumes; providers without a script ignore it.
    fn fast_forward(&mut self, _role: AgentRole, _calls: usize) {}
}

/// Scripted provider. Each role has an ordered list of responses consumed one
/// per call; once the list is exhausted the last response repeats. A response
/// whose first line is `@@timeout` or `@@error <message>` simulates a
/// transport failure instead of returning text.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    scripts: HashMap<AgentRole, Vec<String>>,
    cursors: HashMap<AgentRole, usize>,
}

impl MockProvider {
    /// Loads `<dir>/<role>/*` files, sorted by file name, for every role
    /// directory that exists.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        if !dir.is_dir() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("mock directory {} does not exist", dir.display()),
            ));
        }
        let mut mock = Self::default();
        for role in AgentRole::ALL {
            let role_dir = dir.join(role.as_str());
            if !role_dir.is_dir() {
                continue;
            }
            let mut files: Vec<_> = fs::read_dir(&role_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            let texts = files.iter().map(fs::read_to_string).collect::<Result<Vec<_>, _>>()?;
            mock.script(role, texts);
        }
        Ok(mock)
    }

    pub fn script(&mut self, role: AgentRole, responses: Vec<String>) {
        self.scripts.insert(role, responses);
        self.cursors.insert(role, 0);
    }

    pub fn calls(&self, role: AgentRole) -> usize {
        self.cursors.get(&role).copied().unwrap_or(0)
    }
}

impl Provider for MockProvider {
    fn complete(&mut self, role: AgentRole, _request: &ChatRequest) -> Result<String, TransportError> {
        let script = self
            .scripts
            .get(&role)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| TransportError::Connection(format!("no mock script for role {role}")))?;
        let cursor = self.cursors.entry(role).or_insert(0);
        let text = script[(*cursor).min(script.len() - 1)].clone();
        *cursor += 1;
        let first = text.lines().next().unwrap_or("").trim();
        if first == "@@timeout" {
            return Err(TransportError::Timeout);
        }
        if let Some(msg) = first.strip_prefix("@@error") {
            return Err(TransportError::Connection(msg.trim().to_string()));
        }
        Ok(text)
    }

    fn fast_forward(&mut self, role: AgentRole, calls: usize) {
        *self.cursors.entry(role).or_insert(0) += calls;
    }
}

/// OpenAI-style `/chat/completions` client. The bearer token is read from the
/// environment variable named in the config on every request.
pub struct HttpProvider {
    endpoint: String,
    api_key_env: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct CompletionReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoint: config.endpoint.clone(), api_key_env: config.api_key_env.clone(), agent }
    }
}

impl Provider for HttpProvider {
    fn complete(&mut self, _role: AgentRole, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(request).map_err(|e| TransportError::Malformed(e.to_string()))?;
        let mut resp = req.send(body.as_bytes()).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Connection(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Connection(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text.chars().take(500).collect() });
        }
        let reply: CompletionReply = serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::Malformed("no choices in reply".into()))
    }
}
