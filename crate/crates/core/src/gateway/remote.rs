use std::time::Duration;

use serde_json::json;

use super::{Gateway, GatewayConfig, GatewayError, API_KEY_ENV};

/// OpenAI-compatible `/v1/chat/completions` client with exponential backoff on 429 and 5xx.
pub struct RemoteGateway {
    config: GatewayConfig,
    url: String,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl RemoteGateway {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let endpoint = config.endpoint.clone().unwrap_or_default();
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteGateway {
            config,
            url,
            agent,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, prompt: &str) -> Result<Result<String, GatewayError>, GatewayError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(GatewayError::Timeout),
            Err(e) => return Err(GatewayError::Http(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Err(GatewayError::Timeout),
            Err(e) => return Err(GatewayError::Http(e.to_string())),
        };
        if status == 429 || (500..600).contains(&status) {
            // retryable
            return Ok(Err(GatewayError::Http(format!("status {status}"))));
        }
        if !(200..300).contains(&status) {
            return Err(GatewayError::Http(format!("status {status}: {text}")));
        }
        Ok(Ok(first_message(&text)?))
    }
}

fn first_message(body: &str) -> Result<String, GatewayError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))
}

impl Gateway for RemoteGateway {
    fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        let mut delay = self.config.backoff_ms;
        let mut attempt = 0;
        loop {
            match self.attempt(prompt)? {
                Ok(text) => return Ok(text),
                Err(e) if attempt >= self.config.max_retries => return Err(e),
                Err(e) => {
                    log::warn!("chat completion attempt {} failed: {e}; retrying in {delay} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }
}
