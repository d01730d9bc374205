//! Per-item generation: language classification, translation to English,
//! sketch prediction, schema linking, example retrieval and final query
//! generation, with every provider call recorded in a transcript.

pub mod augment;
pub mod config;
pub mod corpora;
pub mod extract;
#[cfg(feature = "http")]
pub mod http;
pub mod links;
pub mod prompt;
pub mod provider;

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{augment, AugmentError, AugmentOutcome, AugmentSettings, Rejection};
pub use config::{ConfigError, PipelineConfig, ProviderConfig, ProviderSet};
pub use extract::{extract_query, Extracted};
pub use links::{
    links_from_query, parse_schema_links, render_schema, serialize_schema_links, LinkFormatError,
    SchemaLinkResult,
};
pub use prompt::{assemble_generation_prompt, GenerationInputs, Templates};
pub use provider::{
    ChatProvider, ChatRequest, DecodingParams, EchoGoldProvider, FixedProvider, ProviderError,
    Role, ScriptedProvider,
};

use crate::dataset::{Catalog, DatasetRecord};
use crate::query::stage_signature;
use crate::retrieval::{classify_language, Embedder, ExamplePair, IndexSet, Language};
use crate::schema::infer_schema;
use prompt::{fill, repair_suffix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("unknown database `{0}`")]
    UnknownDatabase(String),
    #[error("no provider configured for the {0} role")]
    MissingProvider(Role),
}

/// One provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub item: usize,
    pub role: Role,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExample {
    pub nlq: String,
    pub query: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub k: usize,
    pub threshold: f64,
    /// Language whose index was searched; `None` when there was none.
    pub index: Option<Language>,
    pub examples: Vec<RetrievedExample>,
}

/// Intermediate results of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub detected_language: Option<Language>,
    pub question_en: String,
    pub schema_en: String,
    pub sketch: Option<String>,
    pub sketch_signature: Option<Vec<String>>,
    pub links: String,
    pub retrieval: RetrievalTrace,
    pub generation_attempts: u32,
    pub errors: Vec<StepError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepError {
    pub step: String,
    pub message: String,
}

/// A dataset record with its prediction filled in, plus the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(flatten)]
    pub record: DatasetRecord,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemOutput {
    pub prediction: PredictionRecord,
    pub transcript: Vec<TranscriptEntry>,
}

/// Everything a run needs, shared read-only across items.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub templates: Templates,
    pub providers: ProviderSet,
    pub dbs: Catalog,
    pub indices: IndexSet,
    pub embedder: Box<dyn Embedder>,
    schemas: HashMap<String, String>,
}

struct Caller<'a> {
    item: usize,
    pipeline: &'a Pipeline,
    transcript: Vec<TranscriptEntry>,
}

impl Caller<'_> {
    fn call(&mut self, role: Role, system: &str, user: String) -> Result<String, ProviderError> {
        let request = ChatRequest {
            role,
            system: system.to_owned(),
            user,
            params: self.pipeline.config.params(role),
        };
        let provider = self
            .pipeline
            .providers
            .get(role)
            .ok_or_else(|| ProviderError::new(role, "no provider configured"))?;
        let started = Instant::now();
        let result = provider.complete(&request);
        let latency_ms = started.elapsed().as_millis() as u64;
        let (response, error) = match &result {
            Ok(text) => (Some(text.clone()), None),
            Err(e) => (None, Some(e.message.clone())),
        };
        self.transcript.push(TranscriptEntry {
            item: self.item,
            role,
            request,
            response,
            error,
            latency_ms,
        });
        result
    }
}

fn fail(trace: &mut Trace, step: &str, message: String) {
    trace.errors.push(StepError {
        step: step.into(),
        message,
    });
}

fn tagged<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(text[start..end].trim())
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        templates: Templates,
        providers: ProviderSet,
        dbs: Catalog,
        indices: IndexSet,
        embedder: Box<dyn Embedder>,
    ) -> Self {
        let schemas = dbs
            .iter()
            .map(|(id, db)| (id.clone(), render_schema(&infer_schema(db))))
            .collect();
        Pipeline {
            config,
            templates,
            providers,
            dbs,
            indices,
            embedder,
            schemas,
        }
    }

    /// Rendered schema of a database, `# collection: paths` per line.
    pub fn schema_text(&self, db_id: &str) -> Option<&str> {
        self.schemas.get(db_id).map(String::as_str)
    }

    fn translate(
        &self,
        c: &mut Caller<'_>,
        language: Language,
        question: &str,
        schema: &str,
    ) -> Result<(String, String), ProviderError> {
        if language == Language::En {
            return Ok((question.to_owned(), schema.to_owned()));
        }
        let t = &self.templates.translate;
        let user = fill(
            &t.user,
            &[
                ("language", language.english_name()),
                ("schema", schema),
                ("question", question),
            ],
        );
        let answer = c.call(Role::Translator, &t.system, user)?;
        let q = tagged(&answer, "question").unwrap_or(answer.trim());
        let s = tagged(&answer, "schema").unwrap_or(schema);
        Ok((q.to_owned(), s.to_owned()))
    }

    /// Returns the last answer and its parse, re-prompting with the parse
    /// error up to `max_repair_retries` times.
    fn call_with_repair(
        &self,
        c: &mut Caller<'_>,
        role: Role,
        system: &str,
        user: &str,
    ) -> Result<(Extracted, u32), ProviderError> {
        let mut prompt = user.to_owned();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let answer = c.call(role, system, prompt.clone())?;
            let extracted = extract_query(&answer);
            match &extracted.query {
                Err(e) if attempts <= self.config.max_repair_retries => {
                    prompt = format!(
                        "{user}\n{}",
                        repair_suffix(&self.templates, &answer, &e.to_string())
                    );
                }
                _ => return Ok((extracted, attempts)),
            }
        }
    }

    fn retrieve(&self, question: &str, language: Language, trace: &mut Trace) -> Vec<ExamplePair> {
        let Some(index) = self.indices.get(&language) else {
            return Vec::new();
        };
        trace.retrieval.index = Some(language);
        match self.embedder.embed(question) {
            Ok(v) => {
                let hits = index.search(&v, self.config.k, self.config.threshold);
                trace.retrieval.examples = hits
                    .iter()
                    .map(|h| RetrievedExample {
                        nlq: h.pair.nlq.clone(),
                        query: h.pair.query_text.clone(),
                        similarity: h.similarity,
                    })
                    .collect();
                hits.into_iter().map(|h| h.pair.clone()).collect()
            }
            Err(e) => {
                trace.errors.push(StepError {
                    step: "retrieve".into(),
                    message: e.to_string(),
                });
                Vec::new()
            }
        }
    }

    /// Runs one item. Step failures are recorded in the trace; the item is
    /// always emitted, with an empty prediction when generation failed.
    pub fn run_item(
        &self,
        index: usize,
        item: &DatasetRecord,
    ) -> Result<ItemOutput, PipelineError> {
        let schema = self
            .schema_text(&item.db_id)
            .ok_or_else(|| PipelineError::UnknownDatabase(item.db_id.clone()))?;
        let mut c = Caller {
            item: index,
            pipeline: self,
            transcript: Vec::new(),
        };
        let detected = classify_language(&item.nlq).ok();
        let language = detected.unwrap_or(item.language);
        let mut trace = Trace {
            detected_language: detected,
            question_en: String::new(),
            schema_en: String::new(),
            sketch: None,
            sketch_signature: None,
            links: String::new(),
            retrieval: RetrievalTrace {
                k: self.config.k,
                threshold: self.config.threshold,
                index: None,
                examples: Vec::new(),
            },
            generation_attempts: 0,
            errors: Vec::new(),
        };

        let (question_en, schema_en) = match self.translate(&mut c, language, &item.nlq, schema) {
            Ok(pair) => pair,
            Err(e) => {
                fail(&mut trace, "translate", e.to_string());
                (item.nlq.clone(), schema.to_owned())
            }
        };
        trace.question_en = question_en.clone();
        trace.schema_en = schema_en.clone();

        let t = &self.templates.sketch;
        let user = fill(
            &t.user,
            &[("schema", &schema_en), ("question", &question_en)],
        );
        match self.call_with_repair(&mut c, Role::Sketch, &t.system, &user) {
            Ok((extracted, _)) => match extracted.query {
                Ok(q) => {
                    trace.sketch_signature =
                        Some(stage_signature(&q).into_iter().map(str::to_owned).collect());
                    trace.sketch = Some(q.to_string());
                }
                Err(e) => fail(&mut trace, "sketch", format!("sketch unparseable: {e}")),
            },
            Err(e) => fail(&mut trace, "sketch", e.to_string()),
        }

        let t = &self.templates.link;
        let user = fill(&t.user, &[("schema", schema), ("question", &item.nlq)]);
        match c.call(Role::Linker, &t.system, user) {
            Ok(answer) => match parse_schema_links(&answer) {
                Ok(links) => trace.links = serialize_schema_links(&links),
                Err(e) => fail(&mut trace, "link", e.to_string()),
            },
            Err(e) => fail(&mut trace, "link", e.to_string()),
        }

        let examples = self.retrieve(&item.nlq, language, &mut trace);
        let sketch = trace.sketch.clone().unwrap_or_default();
        let (system, user) = assemble_generation_prompt(
            &self.templates,
            &GenerationInputs {
                question: &item.nlq,
                language,
                schema,
                sketch: &sketch,
                links: &trace.links,
                examples: &examples,
            },
        );
        let prediction = match self.call_with_repair(&mut c, Role::Generator, &system, &user) {
            Ok((extracted, attempts)) => {
                trace.generation_attempts = attempts;
                if let Err(e) = &extracted.query {
                    fail(
                        &mut trace,
                        "generate",
                        format!("generation unparseable: {e}"),
                    );
                }
                extracted.text
            }
            Err(e) => {
                fail(&mut trace, "generate", e.to_string());
                String::new()
            }
        };

        let mut record = item.clone();
        record.prediction = Some(prediction);
        Ok(ItemOutput {
            prediction: PredictionRecord { record, trace },
            transcript: c.transcript,
        })
    }

    /// Runs all items on `config.parallelism` threads; outputs keep input
    /// order. Unknown databases are reported before any provider call.
    pub fn run_all(&self, items: &[DatasetRecord]) -> Result<Vec<ItemOutput>, PipelineError> {
        if let Some(bad) = items.iter().find(|i| !self.schemas.contains_key(&i.db_id)) {
            return Err(PipelineError::UnknownDatabase(bad.db_id.clone()));
        }
        for role in [
            Role::Translator,
            Role::Sketch,
            Role::Linker,
            Role::Generator,
        ] {
            if self.providers.get(role).is_none() {
                return Err(PipelineError::MissingProvider(role));
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| self.run_item(i, item))
                .collect()
        })
    }
}
