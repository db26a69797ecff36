use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;

use super::{normalize_name, sha256_hex, Gateway, GatewayError};

/// Deterministic gateway answering from registered tables.
///
/// Completions are keyed by the SHA-256 of the prompt. Extraction facts are keyed by
/// `(context digest, normalized name)`, or by a context substring for hand-written fixtures.
#[derive(Debug, Default)]
pub struct MockGateway {
    canned: HashMap<String, String>,
    rules: Vec<(String, String)>,
    facts: HashMap<(String, String), String>,
    substring_facts: Vec<(String, String, String)>,
    strict: bool,
    calls: AtomicUsize,
}

/// On-disk registry format.
#[derive(Debug, Default, Deserialize)]
pub struct MockSpec {
    #[serde(default = "yes")]
    pub strict: bool,
    #[serde(default)]
    pub canned: Vec<CannedEntry>,
    #[serde(default)]
    pub rules: Vec<RuleEntry>,
    #[serde(default)]
    pub facts: Vec<FactEntry>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
pub struct CannedEntry {
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub prompt_sha256: Option<String>,
    pub response: String,
}

#[derive(Debug, Deserialize)]
pub struct RuleEntry {
    pub contains: String,
    pub response: String,
}

#[derive(Debug, Deserialize)]
pub struct FactEntry {
    #[serde(default)]
    pub context: Option<String>,
    #[serde(default)]
    pub context_sha256: Option<String>,
    #[serde(default)]
    pub context_contains: Option<String>,
    pub name: String,
    pub value: String,
}

impl MockGateway {
    /// Strict: unregistered prompts are an error.
    pub fn new() -> Self {
        MockGateway {
            strict: true,
            ..Default::default()
        }
    }

    /// Unregistered prompts fall through to substring rules, then to `"no data"`.
    pub fn lenient() -> Self {
        MockGateway::default()
    }

    pub fn from_spec(spec: MockSpec) -> Result<Self, GatewayError> {
        let mut gw = MockGateway {
            strict: spec.strict,
            ..Default::default()
        };
        for c in spec.canned {
            let key = match (c.prompt, c.prompt_sha256) {
                (Some(p), _) => sha256_hex(&p),
                (None, Some(h)) => h.to_ascii_lowercase(),
                (None, None) => return Err(GatewayError::Config("canned entry needs prompt or prompt_sha256".into())),
            };
            gw.canned.insert(key, c.response);
        }
        for r in spec.rules {
            gw.rules.push((r.contains, r.response));
        }
        for f in spec.facts {
            match (f.context, f.context_sha256, f.context_contains) {
                (Some(ctx), _, _) => gw = gw.with_fact(&ctx, &f.name, &f.value),
                (None, Some(h), _) => {
                    gw.facts.insert((h.to_ascii_lowercase(), normalize_name(&f.name)), f.value);
                }
                (None, None, Some(sub)) => gw.substring_facts.push((sub, normalize_name(&f.name), f.value)),
                _ => return Err(GatewayError::Config("fact needs a context key".into())),
            }
        }
        Ok(gw)
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let spec: MockSpec = serde_json::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn with_response(mut self, prompt: &str, response: &str) -> Self {
        self.canned.insert(sha256_hex(prompt), response.to_string());
        self
    }

    pub fn with_rule(mut self, contains: &str, response: &str) -> Self {
        self.rules.push((contains.to_string(), response.to_string()));
        self
    }

    /// Register `name(context) = value` for relation and attribute extraction.
    pub fn with_fact(mut self, context: &str, name: &str, value: &str) -> Self {
        self.facts
            .insert((sha256_hex(context), normalize_name(name)), value.to_string());
        self
    }

    pub fn with_fact_containing(mut self, needle: &str, name: &str, value: &str) -> Self {
        self.substring_facts
            .push((needle.to_string(), normalize_name(name), value.to_string()));
        self
    }

    /// Number of gateway calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup_fact(&self, context: &str, name: &str) -> Option<String> {
        if context.trim().is_empty() {
            return None;
        }
        let name = normalize_name(name);
        if let Some(v) = self.facts.get(&(sha256_hex(context), name.clone())) {
            return Some(v.clone());
        }
        self.substring_facts
            .iter()
            .find(|(needle, n, _)| *n == name && context.contains(needle.as_str()))
            .map(|(_, _, v)| v.clone())
    }
}

impl Gateway for MockGateway {
    fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = sha256_hex(prompt);
        if let Some(r) = self.canned.get(&key) {
            return Ok(r.clone());
        }
        if self.strict {
            return Err(GatewayError::NoCannedResponse(key));
        }
        if let Some((_, r)) = self.rules.iter().find(|(needle, _)| prompt.contains(needle.as_str())) {
            return Ok(r.clone());
        }
        Ok("no data".to_string())
    }

    fn extract_relation(&self, context: &str, relation: &str, _query: &str) -> Result<Option<String>, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.lookup_fact(context, relation))
    }

    fn extract_attribute(&self, context: &str, attribute: &str, _query: &str) -> Result<Option<String>, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.lookup_fact(context, attribute))
    }
}
