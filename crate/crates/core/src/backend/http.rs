//! JSON-over-HTTP clients for the three remote model services.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::masking::FillMaskBackend;
use crate::prompt::{GenerationParams, LlmBackend};
use crate::retrieval::EmbedderBackend;

pub const LLM_URL_VAR: &str = "GLOSSFORGE_LLM_URL";
pub const LLM_KEY_VAR: &str = "GLOSSFORGE_LLM_KEY";
pub const EMBED_URL_VAR: &str = "GLOSSFORGE_EMBED_URL";
pub const EMBED_KEY_VAR: &str = "GLOSSFORGE_EMBED_KEY";
pub const FILLMASK_URL_VAR: &str = "GLOSSFORGE_FILLMASK_URL";

#[derive(Debug, Clone)]
struct JsonEndpoint {
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl JsonEndpoint {
    fn new(url: String, key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        JsonEndpoint { url, key, agent }
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        body: &B,
        timeout: Duration,
    ) -> Result<R, BackendError> {
        let mut req = self
            .agent
            .post(&self.url)
            .config()
            .timeout_global(Some(timeout))
            .build();
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| BackendError::Transport {
            endpoint: self.url.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Status {
                endpoint: self.url.clone(),
                status,
                body: body.chars().take(500).collect(),
            });
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| BackendError::InvalidResponse {
                endpoint: self.url.clone(),
                message: e.to_string(),
            })
    }

    fn invalid(&self, message: impl Into<String>) -> BackendError {
        BackendError::InvalidResponse {
            endpoint: self.url.clone(),
            message: message.into(),
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

/// Chat-completion client speaking the common `choices[0].message.content` shape.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    endpoint: JsonEndpoint,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatClient {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        HttpChatClient {
            endpoint: JsonEndpoint::new(url.into(), key),
        }
    }

    /// Endpoint from `GLOSSFORGE_LLM_URL`, key from `GLOSSFORGE_LLM_KEY`.
    pub fn from_env() -> Option<Self> {
        Some(Self::new(env_var(LLM_URL_VAR)?, env_var(LLM_KEY_VAR)))
    }

    pub fn url(&self) -> &str {
        &self.endpoint.url
    }
}

impl LlmBackend for HttpChatClient {
    fn complete(
        &self,
        system: &str,
        user: &str,
        params: &GenerationParams,
    ) -> Result<String, BackendError> {
        let req = ChatRequest {
            model: &params.model_id,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
            temperature: params.temperature,
            max_tokens: params.max_output_tokens,
        };
        let resp: ChatResponse = self
            .endpoint
            .post(&req, Duration::from_secs(params.timeout_secs.max(1)))?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| self.endpoint.invalid("no choices"))?;
        Ok(choice.message.content.unwrap_or_default())
    }
}

/// Embedding service: `{texts}` in, `{vectors}` out.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: JsonEndpoint,
    name: String,
    dimension: usize,
    timeout: Duration,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        key: Option<String>,
        name: impl Into<String>,
        dimension: usize,
    ) -> Self {
        HttpEmbedder {
            endpoint: JsonEndpoint::new(url.into(), key),
            name: name.into(),
            dimension,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn from_env(name: impl Into<String>, dimension: usize) -> Option<Self> {
        Some(Self::new(env_var(EMBED_URL_VAR)?, env_var(EMBED_KEY_VAR), name, dimension))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl EmbedderBackend for HttpEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let resp: EmbedResponse = self.endpoint.post(&EmbedRequest { texts }, self.timeout)?;
        if resp.vectors.len() != texts.len() {
            return Err(self.endpoint.invalid(format!(
                "{} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        Ok(resp.vectors)
    }
}

/// Fill-mask service: `{text_with_mask, top_k}` in, `{candidates}` out.
#[derive(Debug, Clone)]
pub struct HttpFillMask {
    endpoint: JsonEndpoint,
    timeout: Duration,
}

#[derive(Serialize)]
struct FillMaskRequest<'a> {
    text_with_mask: &'a str,
    top_k: usize,
}

#[derive(Deserialize)]
struct FillMaskResponse {
    candidates: Vec<FillMaskCandidate>,
}

#[derive(Deserialize)]
struct FillMaskCandidate {
    token: String,
    score: f64,
}

impl HttpFillMask {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        HttpFillMask {
            endpoint: JsonEndpoint::new(url.into(), key),
            timeout: Duration::from_secs(60),
        }
    }

    pub fn from_env() -> Option<Self> {
        Some(Self::new(env_var(FILLMASK_URL_VAR)?, None))
    }
}

impl FillMaskBackend for HttpFillMask {
    fn candidates(&self, text_with_mask: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError> {
        let resp: FillMaskResponse = self.endpoint.post(
            &FillMaskRequest {
                text_with_mask,
                top_k: k,
            },
            self.timeout,
        )?;
        let mut out: Vec<(String, f64)> = resp
            .candidates
            .into_iter()
            .map(|c| (c.token, c.score))
            .collect();
        if out.iter().any(|(_, s)| !s.is_finite()) {
            return Err(self.endpoint.invalid("non-finite candidate score"));
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out.truncate(k);
        Ok(out)
    }
}
