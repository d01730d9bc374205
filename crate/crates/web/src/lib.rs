//! Browser query playground. Every export takes and returns plain strings;
//! the JSON-producing functions are ordinary Rust and can be tested natively.

use std::sync::OnceLock;

use polynosql::metrics::score;
use polynosql::query::{field_inventory, sketch_of, stage_signature};
use polynosql::schema::infer_schema;
use polynosql::{parse, Database, Query, QueryError};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

const SUBJECTS: &str = include_str!("../../core/fixtures/registrations/科目.json");
const COURSES: &str = include_str!("../../core/fixtures/registrations/课程.json");

/// The bundled database: university subjects with nested courses and registrations.
pub fn sample_db() -> &'static Database {
    static DB: OnceLock<Database> = OnceLock::new();
    DB.get_or_init(|| {
        let text = format!(r#"{{"科目": {SUBJECTS}, "课程": {COURSES}}}"#);
        Database::from_json("registrations", &text).expect("bundled database is valid")
    })
}

fn parse_error(e: &QueryError) -> Value {
    match e {
        QueryError::Parse { position, message } => {
            json!({"ok": false, "error": message, "position": position})
        }
        other => json!({"ok": false, "error": other.to_string()}),
    }
}

fn parsed(text: &str) -> Result<Query, Value> {
    parse(text).map_err(|e| parse_error(&e))
}

pub fn inspect_json(text: &str) -> Value {
    let q = match parsed(text) {
        Ok(q) => q,
        Err(e) => return e,
    };
    json!({
        "ok": true,
        "canonical": q.to_string(),
        "stages": stage_signature(&q),
        "fields": field_inventory(&q).iter().map(ToString::to_string).collect::<Vec<_>>(),
        "sketch": sketch_of(&q).to_string(),
    })
}

pub fn run_json(text: &str) -> Value {
    let q = match parsed(text) {
        Ok(q) => q,
        Err(e) => return e,
    };
    match sample_db().execute(&q) {
        Ok(rs) => {
            json!({"ok": true, "ordered": rs.ordered, "count": rs.docs.len(), "rows": rs.docs})
        }
        Err(e) => json!({"ok": false, "error": e.to_string()}),
    }
}

pub fn compare_json(pred: &str, gold: &str) -> Value {
    let gold = match parsed(gold) {
        Ok(q) => q,
        Err(mut e) => {
            e["side"] = json!("gold");
            return e;
        }
    };
    let pred = match parsed(pred) {
        Ok(q) => q,
        Err(mut e) => {
            e["side"] = json!("prediction");
            return e;
        }
    };
    match score(sample_db(), &pred, &gold) {
        Ok(flags) => json!({"ok": true, "flags": flags}),
        Err(e) => json!({"ok": false, "error": e.to_string(), "side": "gold"}),
    }
}

pub fn schema_json() -> Value {
    serde_json::from_str(&infer_schema(sample_db()).to_json()).expect("schema serializes")
}

#[wasm_bindgen]
pub fn inspect(text: &str) -> String {
    inspect_json(text).to_string()
}

#[wasm_bindgen]
pub fn run(text: &str) -> String {
    run_json(text).to_string()
}

#[wasm_bindgen]
pub fn compare(pred: &str, gold: &str) -> String {
    compare_json(pred, gold).to_string()
}

#[wasm_bindgen]
pub fn schema() -> String {
    schema_json().to_string()
}
