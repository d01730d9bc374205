//! New (question, query) pairs with different intents, proposed by a
//! provider and kept only when they parse and execute.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::links::render_schema;
use super::prompt::{fill, Templates};
use super::provider::{ChatProvider, ChatRequest, DecodingParams, ProviderError, Role};
use crate::dataset::{Catalog, DatasetRecord};
use crate::query::{parse, Query};
use crate::retrieval::Language;
use crate::schema::infer_schema;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSettings {
    pub count: usize,
    pub paraphrases: usize,
    pub languages: Vec<Language>,
    pub params: DecodingParams,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("source {index}: unknown database `{db_id}`")]
    UnknownDatabase { index: usize, db_id: String },
    #[error("source {index}: gold query does not parse: {message}")]
    SourceUnparseable { index: usize, message: String },
    #[error("source {index}: {error}")]
    Provider { index: usize, error: ProviderError },
}

/// A discarded candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub source: usize,
    pub candidate: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentOutcome {
    pub pairs: Vec<DatasetRecord>,
    pub rejections: Vec<Rejection>,
}

#[derive(Deserialize)]
struct Batch {
    candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
struct Candidate {
    query: String,
    #[serde(default)]
    nlqs: BTreeMap<String, Vec<String>>,
}

/// The JSON object in a reply: a fenced block if one parses, else the span
/// from the first `{` to the last `}`.
fn json_payload(text: &str) -> Option<serde_json::Value> {
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body = &after[after.find('\n').map_or(after.len(), |i| i + 1)..];
        let Some(close) = body.find("```") else { break };
        if let Ok(v) = serde_json::from_str(body[..close].trim()) {
            return Some(v);
        }
        rest = &body[close + 3..];
    }
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    serde_json::from_str(text.get(start..=end)?).ok()
}

/// Prompts the provider once per source pair and validates every candidate
/// against the source's database. Duplicates of any source query or of an
/// already accepted candidate are dropped, as are candidates that fail to
/// parse or execute; each drop is logged as a [`Rejection`].
pub fn augment(
    sources: &[DatasetRecord],
    dbs: &Catalog,
    provider: &dyn ChatProvider,
    templates: &Templates,
    settings: &AugmentSettings,
) -> Result<AugmentOutcome, AugmentError> {
    let mut seen: Vec<Query> = Vec::new();
    for (index, s) in sources.iter().enumerate() {
        let q = parse(&s.query).map_err(|e| AugmentError::SourceUnparseable {
            index,
            message: e.to_string(),
        })?;
        if !dbs.contains_key(&s.db_id) {
            return Err(AugmentError::UnknownDatabase {
                index,
                db_id: s.db_id.clone(),
            });
        }
        if !seen.contains(&q) {
            seen.push(q);
        }
    }
    let languages: Vec<&str> = settings.languages.iter().map(|l| l.code()).collect();
    let languages = languages.join(", ");
    let count = settings.count.to_string();
    let paraphrases = settings.paraphrases.to_string();

    let mut out = AugmentOutcome::default();
    for (index, s) in sources.iter().enumerate() {
        let db = &dbs[&s.db_id];
        let schema = render_schema(&infer_schema(db));
        let t = &templates.augment;
        let user = fill(
            &t.user,
            &[
                ("schema", &schema),
                ("question", &s.nlq),
                ("query", &s.query),
                ("count", &count),
                ("paraphrases", &paraphrases),
                ("languages", &languages),
            ],
        );
        let req = ChatRequest {
            role: Role::Augmenter,
            system: t.system.clone(),
            user,
            params: settings.params.clone(),
        };
        let reply = provider
            .complete(&req)
            .map_err(|error| AugmentError::Provider { index, error })?;
        let mut reject = |candidate: Option<String>, reason: String| {
            log::warn!("augment source {index}: rejected candidate: {reason}");
            out.rejections.push(Rejection {
                source: index,
                candidate,
                reason,
            });
        };
        let batch = match json_payload(&reply).map(serde_json::from_value::<Batch>) {
            Some(Ok(b)) => b,
            Some(Err(e)) => {
                reject(None, format!("reply is not a candidate batch: {e}"));
                continue;
            }
            None => {
                reject(None, "reply holds no JSON object".into());
                continue;
            }
        };
        for c in batch.candidates {
            let q = match parse(&c.query) {
                Ok(q) => q,
                Err(e) => {
                    reject(Some(c.query), format!("does not parse: {e}"));
                    continue;
                }
            };
            if let Err(e) = db.execute(&q) {
                reject(Some(c.query), format!("does not execute: {e}"));
                continue;
            }
            if seen.contains(&q) {
                reject(Some(c.query), "duplicates an existing query".into());
                continue;
            }
            let mut records = Vec::new();
            for (code, nlqs) in &c.nlqs {
                match code.parse::<Language>() {
                    Ok(lang) if settings.languages.contains(&lang) => {
                        for nlq in nlqs.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
                            records.push(DatasetRecord {
                                nlq: nlq.to_owned(),
                                language: lang,
                                db_id: s.db_id.clone(),
                                query: q.to_string(),
                                prediction: None,
                            });
                        }
                    }
                    Ok(_) => {}
                    Err(e) => reject(Some(c.query.clone()), format!("ignored questions: {e}")),
                }
            }
            if records.is_empty() {
                reject(
                    Some(c.query),
                    "no questions in the requested languages".into(),
                );
                continue;
            }
            seen.push(q);
            out.pairs.extend(records);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Database;
    use crate::pipeline::provider::FixedProvider;

    fn setup() -> (Vec<DatasetRecord>, Catalog) {
        let db = Database::from_json("shop", r#"{"items": [{"_id": 1, "name": "pen", "price": 2}, {"_id": 2, "name": "ink", "price": 5}]}"#)
            .unwrap();
        let src = DatasetRecord {
            nlq: "Which items cost more than 3?".into(),
            language: Language::En,
            db_id: "shop".into(),
            query: r#"db.items.find({price: {$gt: 3}})"#.into(),
            prediction: None,
        };
        (vec![src], Catalog::from([("shop".to_owned(), db)]))
    }

    fn settings() -> AugmentSettings {
        AugmentSettings {
            count: 5,
            paraphrases: 1,
            languages: vec![Language::En, Language::Zh],
            params: DecodingParams {
                temperature: 0.0,
                top_p: None,
                max_tokens: None,
            },
        }
    }

    #[test]
    fn filters_candidates() {
        let (src, dbs) = setup();
        let reply = r#"Here you go:
```json
{"candidates": [
  {"query": "db.items.find({}, {name: 1})", "nlqs": {"EN": ["List item names."], "ZH": ["列出商品名称。"], "FR": ["Noms ?"]}},
  {"query": "db.items.find({price: {$gt: 3}})", "nlqs": {"EN": ["dup"]}},
  {"query": "db.items.find({price: ", "nlqs": {"EN": ["broken"]}},
  {"query": "db.items.aggregate([{$count: \"n\"}])", "nlqs": {"EN": ["How many items?", "Count the items."]}},
  {"query": "db.items.aggregate([{$count: \"n\"}])", "nlqs": {"EN": ["again"]}}
]}
```"#;
        let out = augment(
            &src,
            &dbs,
            &FixedProvider(reply.into()),
            &Templates::builtin(),
            &settings(),
        )
        .unwrap();
        let nlqs: Vec<&str> = out.pairs.iter().map(|p| p.nlq.as_str()).collect();
        assert_eq!(
            nlqs,
            [
                "List item names.",
                "列出商品名称。",
                "How many items?",
                "Count the items."
            ]
        );
        assert_eq!(out.rejections.len(), 3);
        for p in &out.pairs {
            let q = parse(&p.query).unwrap();
            assert!(dbs["shop"].execute(&q).is_ok());
        }
    }

    #[test]
    fn unusable_reply_is_logged() {
        let (src, dbs) = setup();
        let out = augment(
            &src,
            &dbs,
            &FixedProvider("sorry".into()),
            &Templates::builtin(),
            &settings(),
        )
        .unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.rejections.len(), 1);
    }
}
