//! Text-generation provider over HTTP.
//!
//! The contract is minimal: POST `{"prompt": ..., "key": ...}` as JSON and
//! read back either a JSON object with a `text` field (and optional
//! `prompt_tokens`/`completion_tokens`) or a plain-text body.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use ssrl_core::summarizer::{ProviderFailure, ProviderReply, SummaryRequest, TextProvider};

use crate::error::{CliError, Result};

pub const URL_VAR: &str = "SSRL_PROVIDER_URL";
pub const TOKEN_VAR: &str = "SSRL_PROVIDER_TOKEN";

pub struct HttpProvider {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    key: String,
    context: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider { agent, url: url.into(), token }
    }

    /// Endpoint and credential from the environment.
    pub fn from_env(timeout: Duration) -> Result<Self> {
        let url = std::env::var(URL_VAR)
            .map_err(|_| CliError::Config(format!("{URL_VAR} must be set for the http provider")))?;
        Ok(HttpProvider::new(url, std::env::var(TOKEN_VAR).ok(), timeout))
    }
}

impl TextProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &SummaryRequest) -> Result<ProviderReply, ProviderFailure> {
        let body = serde_json::to_string(&Body { key: request.key.to_string(), context: &request.context, prompt: &request.prompt })
            .map_err(|e| ProviderFailure::Transient(e.to_string()))?;
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let started = Instant::now();
        let mut response = call.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderFailure::Timeout,
            other => ProviderFailure::Transient(other.to_string()),
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ProviderFailure::Status(status));
        }
        let text = response.body_mut().read_to_string().map_err(|e| ProviderFailure::Transient(e.to_string()))?;
        let latency_ms = Some(started.elapsed().as_millis() as u64);
        Ok(match serde_json::from_str::<Reply>(&text) {
            Ok(r) => ProviderReply { text: r.text, latency_ms, prompt_tokens: r.prompt_tokens, completion_tokens: r.completion_tokens },
            Err(_) => ProviderReply { text, latency_ms, ..ProviderReply::default() },
        })
    }
}
