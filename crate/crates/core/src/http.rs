//! Adapters for HTTP providers speaking the common chat-completions and
//! embeddings JSON schemas.
//!
//! Chat request body:
//!
//! ```json
//! {"model": "<model_id>",
//!  "messages": [{"role": "system", "content": "<prompt>"},
//!               {"role": "user", "content": "<document>"}],
//!  "temperature": 0.0}
//! ```
//!
//! `temperature` is omitted when the provider default is requested. The
//! rewritten text is read from `choices[0].message.content`.
//!
//! Embedding request body is `{"model": "<model_id>", "input": ["...", ...]}`;
//! vectors are read from `data[*].embedding`, ordered by `data[*].index`.
//!
//! Both send `Authorization: Bearer <credential>`.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::embed::EmbedProvider;
use crate::enrich::{ChatProvider, ChatRequest};
use crate::provider::{resolve_credential, ConfigError, ProviderError};

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_json(
    agent: &ureq::Agent,
    endpoint: &str,
    credential: &str,
    body: &serde_json::Value,
) -> Result<String, ProviderError> {
    let mut response = agent
        .post(endpoint)
        .header("Authorization", &format!("Bearer {credential}"))
        .send_json(body)
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(ProviderError::Http {
            status,
            message: text.chars().take(500).collect(),
        });
    }
    Ok(text)
}

pub struct HttpChat {
    endpoint: String,
    credential: String,
    agent: ureq::Agent,
}

impl HttpChat {
    pub fn new(endpoint: &str, auth_ref: &str, timeout: Duration) -> Result<Self, ConfigError> {
        Ok(Self {
            endpoint: endpoint.to_owned(),
            credential: resolve_credential(auth_ref)?,
            agent: agent(timeout),
        })
    }
}

pub fn chat_body(request: &ChatRequest<'_>) -> serde_json::Value {
    let mut body = json!({
        "model": request.model_id,
        "messages": [
            {"role": "system", "content": request.system},
            {"role": "user", "content": request.user},
        ],
    });
    if let Some(t) = request.temperature {
        body["temperature"] = json!(t);
    }
    body
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}
#[derive(Deserialize)]
struct Choice {
    message: Message,
}
#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

pub fn parse_chat_response(text: &str) -> Result<String, ProviderError> {
    let parsed: ChatResponse =
        serde_json::from_str(text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .filter(|c| !c.trim().is_empty())
        .ok_or_else(|| ProviderError::Malformed("no message content in first choice".into()))
}

impl ChatProvider for HttpChat {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ProviderError> {
        let text = post_json(
            &self.agent,
            &self.endpoint,
            &self.credential,
            &chat_body(request),
        )?;
        parse_chat_response(&text)
    }
}

pub struct HttpEmbedder {
    endpoint: String,
    credential: String,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, auth_ref: &str, timeout: Duration) -> Result<Self, ConfigError> {
        Ok(Self {
            endpoint: endpoint.to_owned(),
            credential: resolve_credential(auth_ref)?,
            agent: agent(timeout),
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}
#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

pub fn parse_embedding_response(
    text: &str,
    expected: usize,
) -> Result<Vec<Vec<f64>>, ProviderError> {
    let mut parsed: EmbeddingResponse =
        serde_json::from_str(text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    parsed.data.sort_by_key(|d| d.index);
    let in_order = parsed.data.iter().enumerate().all(|(i, d)| d.index == i);
    if parsed.data.len() != expected || !in_order {
        return Err(ProviderError::Malformed(format!(
            "expected embeddings for indices 0..{expected}"
        )));
    }
    Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
}

impl EmbedProvider for HttpEmbedder {
    fn embed(&self, model_id: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = json!({"model": model_id, "input": texts});
        let text = post_json(&self.agent, &self.endpoint, &self.credential, &body)?;
        parse_embedding_response(&text, texts.len())
    }
}
