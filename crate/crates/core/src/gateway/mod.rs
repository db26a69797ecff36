//! The single boundary for model calls.
//!
//! [`MockGateway`] answers from registered tables and never touches the network;
//! [`RemoteGateway`] speaks the OpenAI-compatible chat-completions protocol.

mod mock;
mod remote;
pub mod templates;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mock::{MockGateway, MockSpec};
pub use remote::RemoteGateway;
pub use templates::{bindings, render_prompt, render_template, Binding, Bindings, PromptName, API_DEFINITION};

/// Environment variable holding the bearer token for remote calls.
pub const API_KEY_ENV: &str = "ERRAG_API_KEY";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("template {template} has no binding for {{{hole}}}")]
    MissingBinding { template: String, hole: String },
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("no canned response for prompt {0}")]
    NoCannedResponse(String),
    #[error("request timed out")]
    Timeout,
    #[error("http error: {0}")]
    Http(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid gateway config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GatewayMode {
    #[default]
    Mock,
    Remote,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default)]
    pub mode: GatewayMode,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Mock registry file (JSON), Mock mode only.
    #[serde(default)]
    pub mock_path: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: GatewayMode::Mock,
            endpoint: None,
            model: None,
            temperature: 0.0,
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            mock_path: None,
        }
    }
}

impl GatewayConfig {
    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        GatewayConfig {
            mode: GatewayMode::Remote,
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.mode == GatewayMode::Remote {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(GatewayError::Config("remote mode requires an endpoint".into()));
            }
            if self.model.as_deref().unwrap_or("").is_empty() {
                return Err(GatewayError::Config("remote mode requires a model".into()));
            }
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Lowercase, with underscores and runs of whitespace collapsed to single spaces.
pub fn normalize_name(name: &str) -> String {
    name.replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Interpret a free-text extraction answer; NONE, null and blank mean absent.
pub fn parse_extracted(answer: &str) -> Option<String> {
    let first = answer.lines().map(str::trim).find(|l| !l.is_empty())?;
    let v = first.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
    let v = v.strip_suffix('.').unwrap_or(v).trim();
    match v.to_ascii_lowercase().as_str() {
        "" | "none" | "null" | "n/a" | "unknown" => None,
        _ => Some(v.to_string()),
    }
}

/// Everything that needs a language model goes through here.
pub trait Gateway: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, GatewayError>;

    /// Entity related to the context by `relation`, e.g. the parent company named in a page.
    fn extract_relation(&self, context: &str, relation: &str, query: &str) -> Result<Option<String>, GatewayError> {
        self.extract_attribute(context, relation, query)
    }

    /// Value of `attribute` stated in `context`.
    fn extract_attribute(&self, context: &str, attribute: &str, query: &str) -> Result<Option<String>, GatewayError> {
        if context.trim().is_empty() {
            return Ok(None);
        }
        let prompt = render_template(
            PromptName::AttributeExtraction,
            &bindings([
                ("Attribute", normalize_name(attribute).into()),
                ("Context", context.into()),
                ("Query", query.into()),
            ]),
        )?;
        Ok(parse_extracted(&self.complete(&prompt)?))
    }

    /// Index into `candidates` of the entity meant by `entity` in the context of `query`.
    fn disambiguate(&self, entity: &str, query: &str, candidates: &[String]) -> Result<usize, GatewayError> {
        let listing = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {c}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render_template(
            PromptName::Disambiguation,
            &bindings([
                ("Entity", entity.into()),
                ("Candidates", listing.into()),
                ("Query", query.into()),
            ]),
        )?;
        let answer = self.complete(&prompt)?;
        parse_choice(&answer, candidates)
    }
}

/// Accepts a 1-based number or a candidate title.
pub fn parse_choice(answer: &str, candidates: &[String]) -> Result<usize, GatewayError> {
    let t = answer.trim().trim_end_matches('.');
    if let Some(n) = t
        .split(|c: char| !c.is_ascii_digit())
        .find(|s| !s.is_empty())
        .and_then(|s| s.parse::<usize>().ok())
    {
        if (1..=candidates.len()).contains(&n) {
            return Ok(n - 1);
        }
    }
    candidates
        .iter()
        .position(|c| c.eq_ignore_ascii_case(t))
        .ok_or_else(|| GatewayError::MalformedResponse(format!("not a candidate: {answer:?}")))
}

/// Build a gateway from config; Mock mode loads `mock_path` when set.
pub fn from_config(config: &GatewayConfig) -> Result<Box<dyn Gateway>, GatewayError> {
    config.validate()?;
    match config.mode {
        GatewayMode::Mock => {
            let gw = match &config.mock_path {
                Some(path) => MockGateway::from_file(std::path::Path::new(path))?,
                None => MockGateway::new(),
            };
            Ok(Box::new(gw))
        }
        GatewayMode::Remote => Ok(Box::new(RemoteGateway::new(config.clone())?)),
    }
}
