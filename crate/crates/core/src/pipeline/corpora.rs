//! Training corpora for the sketch and schema-linking roles, built from gold
//! queries and rendered with the same templates the pipeline uses.

use serde::{Deserialize, Serialize};

use super::links::{links_from_query, render_schema, serialize_schema_links};
use super::prompt::{fill, Templates};
use crate::dataset::{Catalog, DatasetRecord};
use crate::query::{parse, sketch_of};
use crate::retrieval::Language;
use crate::schema::infer_schema;

/// One supervised example: prompt in, expected completion out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusLine {
    pub language: Language,
    pub db_id: String,
    pub system: String,
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpora {
    /// English questions only.
    pub sketch: Vec<CorpusLine>,
    pub links: Vec<CorpusLine>,
    /// Records skipped because the database is unknown or the gold query
    /// does not parse.
    pub skipped: Vec<usize>,
}

pub fn build_corpora(records: &[DatasetRecord], dbs: &Catalog, templates: &Templates) -> Corpora {
    let mut out = Corpora::default();
    for (i, r) in records.iter().enumerate() {
        let (Some(db), Ok(q)) = (dbs.get(&r.db_id), parse(&r.query)) else {
            out.skipped.push(i);
            continue;
        };
        let schema = infer_schema(db);
        let rendered = render_schema(&schema);
        let line = |system: &str, user: &str, completion: String| CorpusLine {
            language: r.language,
            db_id: r.db_id.clone(),
            system: system.to_owned(),
            prompt: fill(user, &[("schema", &rendered), ("question", &r.nlq)]),
            completion,
        };
        if r.language == Language::En {
            let t = &templates.sketch;
            out.sketch
                .push(line(&t.system, &t.user, sketch_of(&q).to_string()));
        }
        let t = &templates.link;
        out.links.push(line(
            &t.system,
            &t.user,
            serialize_schema_links(&links_from_query(&q, &schema)),
        ));
    }
    out
}
