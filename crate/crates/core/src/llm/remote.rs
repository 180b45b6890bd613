use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendConfig, LlmError, PromptTranscript};

/// Chat-completions client speaking the common `messages` JSON protocol.
pub struct RemoteBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

const BODY_EXCERPT: usize = 300;

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, LlmError> {
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| LlmError::Config("remote backend needs an endpoint".into()))?;
        let model = cfg
            .model
            .clone()
            .ok_or_else(|| LlmError::Config("remote backend needs a model".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteBackend {
            url: format!("{}{}", endpoint.trim_end_matches('/'), cfg.path),
            model,
            api_key: std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty()),
            temperature: cfg.temperature,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            agent,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, LlmError)> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (true, LlmError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, LlmError::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let retry = status == 429 || status >= 500;
            let body: String = text.chars().take(BODY_EXCERPT).collect();
            return Err((retry, LlmError::Remote { status, body }));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| {
            (
                false,
                LlmError::Remote {
                    status,
                    body: format!("unparseable response: {e}"),
                },
            )
        })?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| {
                let body: String = text.chars().take(BODY_EXCERPT).collect();
                (false, LlmError::Remote { status, body })
            })
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn complete(&mut self, transcript: &PromptTranscript) -> Result<String, LlmError> {
        let body = json!({
            "model": self.model,
            "messages": transcript.messages(),
            "temperature": self.temperature,
        });
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((true, e)) if tries < self.max_retries => {
                    tries += 1;
                    log::warn!("remote attempt {tries} failed: {e}; retrying");
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(tries - 1));
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}
