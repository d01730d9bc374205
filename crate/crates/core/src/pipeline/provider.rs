use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::links::{links_from_query, serialize_schema_links};
use super::prompt::{section, QUESTION_HEADING, SCHEMA_HEADING};
use crate::dataset::{Catalog, DatasetRecord};
use crate::query::{parse, sketch_of};
use crate::schema::infer_schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Translator,
    Sketch,
    Linker,
    Generator,
    Augmenter,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Translator,
        Role::Sketch,
        Role::Linker,
        Role::Generator,
        Role::Augmenter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Translator => "translator",
            Role::Sketch => "sketch",
            Role::Linker => "linker",
            Role::Generator => "generator",
            Role::Augmenter => "augmenter",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role: Role,
    pub system: String,
    pub user: String,
    pub params: DecodingParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{role} provider: {message}")]
pub struct ProviderError {
    pub role: Role,
    pub message: String,
}

impl ProviderError {
    pub fn new(role: Role, message: impl Into<String>) -> Self {
        ProviderError {
            role,
            message: message.into(),
        }
    }
}

/// A chat-completion backend. Implementations are shared across threads.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }
}

/// Returns the same text for every request.
#[derive(Debug, Clone)]
pub struct FixedProvider(pub String);

impl ChatProvider for FixedProvider {
    fn complete(&self, _req: &ChatRequest) -> Result<String, ProviderError> {
        Ok(self.0.clone())
    }
}

/// Returns `responses[i]` on the i-th call of each role, repeating the last.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    responses: HashMap<Role, Vec<String>>,
    calls: std::sync::Mutex<HashMap<Role, usize>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, role: Role, responses: &[&str]) -> Self {
        self.responses
            .insert(role, responses.iter().map(|s| s.to_string()).collect());
        self
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let list = self
            .responses
            .get(&req.role)
            .ok_or_else(|| ProviderError::new(req.role, "no scripted response"))?;
        let mut calls = self.calls.lock().expect("lock");
        let n = calls.entry(req.role).or_insert(0);
        let out = list[(*n).min(list.len() - 1)].clone();
        *n += 1;
        Ok(out)
    }
}

struct Gold {
    query: String,
    sketch: String,
    links: String,
}

/// Answers every role from the gold data of the question found in the
/// prompt: identity translation, the gold sketch, gold-derived schema links,
/// and the gold query wrapped in a short reasoning text.
pub struct EchoGoldProvider {
    by_question: HashMap<String, Gold>,
}

impl EchoGoldProvider {
    pub fn new(records: &[DatasetRecord], dbs: &Catalog) -> Self {
        let mut by_question = HashMap::new();
        for r in records {
            let Ok(q) = parse(&r.query) else { continue };
            let links = dbs
                .get(&r.db_id)
                .map(|db| serialize_schema_links(&links_from_query(&q, &infer_schema(db))))
                .unwrap_or_default();
            let gold = Gold {
                query: q.to_string(),
                sketch: sketch_of(&q).to_string(),
                links,
            };
            by_question.entry(r.nlq.trim().to_owned()).or_insert(gold);
        }
        EchoGoldProvider { by_question }
    }
}

impl ChatProvider for EchoGoldProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let question = section(&req.user, QUESTION_HEADING)
            .ok_or_else(|| ProviderError::new(req.role, "prompt has no question section"))?;
        if req.role == Role::Translator {
            let schema = section(&req.user, SCHEMA_HEADING).unwrap_or_default();
            return Ok(format!(
                "<question>{question}</question>\n<schema>\n{schema}\n</schema>"
            ));
        }
        let gold = self.by_question.get(question.trim()).ok_or_else(|| {
            ProviderError::new(req.role, format!("unknown question {question:?}"))
        })?;
        Ok(match req.role {
            Role::Sketch => gold.sketch.clone(),
            Role::Linker => gold.links.clone(),
            Role::Generator => format!(
                "Step 1: pick the collection and fields from the schema links.\nStep 2: follow the sketch.\n```javascript\n{}\n```",
                gold.query
            ),
            Role::Translator | Role::Augmenter => {
                return Err(ProviderError::new(req.role, "the echo provider does not serve this role"))
            }
        })
    }
}
