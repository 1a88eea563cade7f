//! HTTP backend: POST `{"prompt", "max_tokens"}` and read `{"text"}` back.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, Prompt};
use crate::error::{Error, Result};

/// Environment variable holding the bearer token.
pub const TOKEN_ENV_VAR: &str = "BIOSEP_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    pub url: String,
    pub max_tokens: u32,
    pub timeout_s: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { url: String::new(), max_tokens: 64, timeout_s: 30.0 }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionReply {
    text: String,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, token: Option<String>) -> Result<Self> {
        if config.url.is_empty() {
            return Err(Error::InvalidConfig("remote backend needs a URL".into()));
        }
        if !(config.timeout_s > 0.0 && config.timeout_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("timeout {} s", config.timeout_s)));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| Error::BackendUnreachable(e.to_string()))?;
        Ok(Self { config, token, client })
    }

    /// Like [`RemoteBackend::new`] with the token taken from [`TOKEN_ENV_VAR`].
    pub fn from_env(config: RemoteConfig) -> Result<Self> {
        let token = std::env::var(TOKEN_ENV_VAR).ok().filter(|t| !t.is_empty());
        Self::new(config, token)
    }
}

impl Backend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    /// Transport failures and non-success statuses are `BackendUnreachable`.
    /// A body that is not `{"text": ...}` is returned verbatim.
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let body = serde_json::to_vec(&CompletionRequest { prompt: &prompt.text, max_tokens: self.config.max_tokens })
            .expect("request serializes");
        let mut req =
            self.client.post(&self.config.url).header(reqwest::header::CONTENT_TYPE, "application/json").body(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Error::BackendUnreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::BackendUnreachable(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| Error::BackendUnreachable(e.to_string()))?;
        Ok(match serde_json::from_str::<CompletionReply>(&text) {
            Ok(reply) => reply.text,
            Err(_) => text,
        })
    }
}
