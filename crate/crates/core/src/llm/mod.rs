//! Everything that talks to the language model: prompt rendering for the six
//! agent roles, providers (HTTP and scripted mock), retries, response
//! extraction and transcripts.

pub mod prompts;
pub mod provider;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use prompts::{
    build_context_descriptor, build_reflection_summary, extract_program_block, ExtractError, PromptContext,
};
pub use provider::{ChatMessage, ChatRequest, HttpProvider, MockProvider, Provider, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    CurriculumAnalysis,
    CurriculumGeneration,
    CurriculumReflection,
    RewardAnalysis,
    RewardGeneration,
    RewardReflection,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::CurriculumAnalysis,
        AgentRole::CurriculumGeneration,
        AgentRole::CurriculumReflection,
        AgentRole::RewardAnalysis,
        AgentRole::RewardGeneration,
        AgentRole::RewardReflection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentRole::CurriculumAnalysis => "curriculum_analysis",
            AgentRole::CurriculumGeneration => "curriculum_generation",
            AgentRole::CurriculumReflection => "curriculum_reflection",
            AgentRole::RewardAnalysis => "reward_analysis",
            AgentRole::RewardGeneration => "reward_generation",
            AgentRole::RewardReflection => "reward_reflection",
        }
    }

    pub fn is_generation(&self) -> bool {
        matches!(self, AgentRole::CurriculumGeneration | AgentRole::RewardGeneration)
    }

    /// 0.2 for the generation roles, 0.0 for analysis and reflection.
    pub fn default_temperature(&self) -> f64 {
        if self.is_generation() {
            0.2
        } else {
            0.0
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown agent role `{s}`"))
    }
}

/// A rendered prompt: system text (context descriptor + role charter), the
/// task-specific user text, and a description of the expected output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub role: AgentRole,
    pub system: String,
    pub user: String,
    pub output_schema: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Mock,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(ProviderKind::Http),
            "mock" => Ok(ProviderKind::Mock),
            other => Err(format!("unknown provider `{other}` (expected http or mock)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    /// Overrides the per-role default when set.
    pub temperature: Option<f64>,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles on each further attempt.
    pub backoff_s: f64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub mock_dir: Option<std::path::PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: None,
            timeout_s: 60.0,
            max_retries: 3,
            backoff_s: 1.0,
            api_key_env: "CURRIFLOW_API_KEY".into(),
            mock_dir: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_s > 0.0) {
            return Err(format!("timeout must be positive, got {}", self.timeout_s));
        }
        if self.max_retries < 1 {
            return Err("max_retries must be at least 1".into());
        }
        if !(self.backoff_s >= 0.0) {
            return Err("backoff must be non-negative".into());
        }
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(format!("temperature {t} outside [0, 2]"));
            }
        }
        Ok(())
    }

    pub fn temperature_for(&self, role: AgentRole) -> f64 {
        self.temperature.unwrap_or_else(|| role.default_temperature())
    }
}

/// One provider attempt. Append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub role: AgentRole,
    pub episode: u64,
    pub attempt: u32,
    pub messages: Vec<ChatMessage>,
    pub response: Option<String>,
    /// `ok`, `transport_error: ...` or `extraction_error: ...`.
    pub extraction: String,
}

pub trait TranscriptSink {
    fn record(&mut self, entry: TranscriptEntry) -> std::io::Result<()>;
}

impl TranscriptSink for Vec<TranscriptEntry> {
    fn record(&mut self, entry: TranscriptEntry) -> std::io::Result<()> {
        self.push(entry);
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("{role}: gateway unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable { role: AgentRole, attempts: u32, last_error: String },
    #[error("transcript write failed: {0}")]
    Transcript(#[from] std::io::Error),
}

/// Provider plus retry policy.
pub struct Gateway {
    provider: Box<dyn Provider>,
    pub config: ProviderConfig,
}

impl Gateway {
    pub fn new(provider: Box<dyn Provider>, config: ProviderConfig) -> Self {
        Self { provider, config }
    }

    /// Builds the provider named by `config`.
    pub fn from_config(config: ProviderConfig) -> Result<Self, String> {
        config.validate()?;
        let provider: Box<dyn Provider> = match config.kind {
            ProviderKind::Mock => {
                let dir = config.mock_dir.as_ref().ok_or("mock provider requires a mock directory")?;
                Box::new(MockProvider::from_dir(dir).map_err(|e| e.to_string())?)
            }
            ProviderKind::Http => Box::new(HttpProvider::new(&config)),
        };
        Ok(Self { provider, config })
    }

    pub fn provider_mut(&mut self) -> &mut dyn Provider {
        self.provider.as_mut()
    }

    /// Single-shot completion with transport retries and no extraction.
    pub fn complete(
        &mut self,
        bundle: &PromptBundle,
        episode: u64,
        sink: &mut dyn TranscriptSink,
    ) -> Result<String, GatewayError> {
        self.request(bundle, episode, sink, |text| Ok::<_, String>(text.to_string()))
    }

    /// Sends `bundle`, applies `extract` to the reply, and retries up to
    /// `max_retries` attempts in total. Transport failures resend the same
    /// conversation after a backoff; extraction failures append the reply and
    /// a follow-up quoting the error.
    pub fn request<T>(
        &mut self,
        bundle: &PromptBundle,
        episode: u64,
        sink: &mut dyn TranscriptSink,
        mut extract: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, GatewayError> {
        let mut messages = vec![
            ChatMessage::new("system", &bundle.system),
            ChatMessage::new("user", &format!("{}\n\n## Output format\n{}", bundle.user, bundle.output_schema)),
        ];
        let k = self.config.max_retries;
        let mut last_error = String::new();
        let mut transport_failures = 0;
        for attempt in 1..=k {
            let req = ChatRequest {
                model: self.config.model.clone(),
                temperature: self.config.temperature_for(bundle.role),
                messages: messages.clone(),
            };
            let result = self.provider.complete(bundle.role, &req);
            let (entry_response, outcome, value) = match result {
                Err(e) => {
                    last_error = e.to_string();
                    (None, format!("transport_error: {e}"), None)
                }
                Ok(text) => match extract(&text) {
                    Ok(v) => (Some(text), "ok".to_string(), Some(v)),
                    Err(msg) => {
                        last_error = msg.clone();
                        (Some(text), format!("extraction_error: {msg}"), None)
                    }
                },
            };
            sink.record(TranscriptEntry {
                timestamp: now(),
                role: bundle.role,
                episode,
                attempt,
                messages: messages.clone(),
                response: entry_response.clone(),
                extraction: outcome,
            })?;
            if let Some(v) = value {
                return Ok(v);
            }
            match entry_response {
                None => {
                    transport_failures += 1;
                    if attempt < k {
                        self.backoff(transport_failures);
                    }
                }
                Some(text) => {
                    messages.push(ChatMessage::new("assistant", &text));
                    messages.push(ChatMessage::new(
                        "user",
                        &format!(
                            "Your previous reply could not be used: {last_error}\nReply again following the output format exactly.\n\n## Output format\n{}",
                            bundle.output_schema
                        ),
                    ));
                }
            }
        }
        Err(GatewayError::Unavailable { role: bundle.role, attempts: k, last_error })
    }

    fn backoff(&self, failures: u32) {
        let secs = self.config.backoff_s * 2f64.powi(failures as i32 - 1);
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(role: AgentRole) -> PromptBundle {
        PromptBundle { role, system: "sys".into(), user: "user".into(), output_schema: "schema".into() }
    }

    fn gateway(scripts: &[(AgentRole, &[&str])]) -> Gateway {
        let mut mock = MockProvider::default();
        for (role, texts) in scripts {
            mock.script(*role, texts.iter().map(|s| s.to_string()).collect());
        }
        Gateway::new(Box::new(mock), ProviderConfig { backoff_s: 0.0, ..Default::default() })
    }

    #[test]
    fn mock_returns_scripted_text() {
        let mut g = gateway(&[(AgentRole::CurriculumAnalysis, &["first", "second"])]);
        let mut t = Vec::new();
        let b = bundle(AgentRole::CurriculumAnalysis);
        assert_eq!(g.complete(&b, 0, &mut t).unwrap(), "first");
        assert_eq!(g.complete(&b, 100, &mut t).unwrap(), "second");
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].episode, 100);
        assert_eq!(t[0].messages[0].content, "sys");
    }

    #[test]
    fn timeout_then_success_records_two_attempts() {
        let mut g = gateway(&[(AgentRole::RewardAnalysis, &["@@timeout", "fine"])]);
        let mut t = Vec::new();
        assert_eq!(g.complete(&bundle(AgentRole::RewardAnalysis), 0, &mut t).unwrap(), "fine");
        assert_eq!(t.len(), 2);
        assert!(t[0].extraction.starts_with("transport_error"));
        assert_eq!(t[0].response, None);
        assert_eq!(t[1].extraction, "ok");
        // transport retries resend the same conversation
        assert_eq!(t[0].messages, t[1].messages);
    }

    #[test]
    fn exhaustion_after_k_attempts() {
        let mut g = gateway(&[(AgentRole::RewardAnalysis, &["@@error connection refused"])]);
        let mut t = Vec::new();
        let err = g.complete(&bundle(AgentRole::RewardAnalysis), 0, &mut t).unwrap_err();
        assert!(matches!(err, GatewayError::Unavailable { attempts: 3, .. }));
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn extraction_failure_quotes_error_in_follow_up() {
        let mut g = gateway(&[(AgentRole::CurriculumGeneration, &["no tag here", "<curriculum density=1 mode=2/>"])]);
        let mut t = Vec::new();
        let got = g
            .request(&bundle(AgentRole::CurriculumGeneration), 0, &mut t, |s| {
                crate::curriculum::decode_curriculum(s).map_err(|e| e.to_string())
            })
            .unwrap();
        assert_eq!(got.tag(), "<curriculum density=1 mode=2/>");
        assert_eq!(t.len(), 2);
        let follow_up = &t[1].messages.last().unwrap().content;
        assert!(follow_up.contains(&crate::curriculum::decode_curriculum("no tag here").unwrap_err().to_string()));
        assert_eq!(t[1].messages[2].content, "no tag here");
    }

    #[test]
    fn temperatures_by_role() {
        let c = ProviderConfig::default();
        assert_eq!(c.temperature_for(AgentRole::RewardGeneration), 0.2);
        assert_eq!(c.temperature_for(AgentRole::RewardReflection), 0.0);
        assert_eq!(c.temperature_for(AgentRole::CurriculumAnalysis), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(ProviderConfig { timeout_s: 0.0, ..Default::default() }.validate().is_err());
        assert!(ProviderConfig { max_retries: 0, ..Default::default() }.validate().is_err());
        assert!(ProviderConfig::default().validate().is_ok());
    }
}
