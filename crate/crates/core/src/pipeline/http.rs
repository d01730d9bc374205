//! OpenAI-compatible chat and embedding endpoints.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::provider::{ChatProvider, ChatRequest, ProviderError};
use crate::retrieval::{Embedder, EmbeddingError};

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn read_key(env: Option<&str>) -> Result<Option<String>, String> {
    match env {
        None => Ok(None),
        Some(var) => std::env::var(var)
            .map(Some)
            .map_err(|_| format!("environment variable {var} is not set")),
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiChat {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiChat {
    /// The API key, if any, is read from `api_key_env` now.
    pub fn new(
        base_url: &str,
        model: &str,
        api_key_env: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, String> {
        Ok(OpenAiChat {
            base_url: base_url.trim_end_matches('/').to_owned(),
            model: model.to_owned(),
            api_key: read_key(api_key_env)?,
            agent: agent(timeout),
        })
    }
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

impl ChatProvider for OpenAiChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let fail = |m: String| ProviderError::new(req.role, m);
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.params.temperature,
        });
        if let Some(p) = req.params.top_p {
            body["top_p"] = json!(p);
        }
        if let Some(n) = req.params.max_tokens {
            body["max_tokens"] = json!(n);
        }
        let mut call = self
            .agent
            .post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(body).map_err(|e| fail(e.to_string()))?;
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| fail(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| fail("response has no message content".into()))
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiEmbedder {
    base_url: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiEmbedder {
    pub fn new(
        base_url: &str,
        model: &str,
        dimension: usize,
        api_key_env: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, String> {
        Ok(OpenAiEmbedder {
            base_url: base_url.trim_end_matches('/').to_owned(),
            model: model.to_owned(),
            dimension,
            api_key: read_key(api_key_env)?,
            agent: agent(timeout),
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingData>,
}

#[derive(Deserialize)]
struct EmbeddingData {
    embedding: Vec<f32>,
}

impl Embedder for OpenAiEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbeddingError> {
        let mut call = self.agent.post(format!("{}/embeddings", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(json!({"model": self.model, "input": text}))
            .map_err(|e| EmbeddingError(e.to_string()))?;
        let parsed: EmbeddingResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError(e.to_string()))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| EmbeddingError("response has no embedding".into()))
    }
}
