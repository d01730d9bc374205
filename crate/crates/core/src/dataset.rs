//! JSONL dataset records and database catalogs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Database, EngineError};
use crate::metrics::EvalItem;
use crate::retrieval::{ExamplePair, Language};
use crate::schema::HasDbId;

/// One dataset line: a question, its gold query, and optionally a prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub nlq: String,
    pub language: Language,
    pub db_id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
}

impl DatasetRecord {
    pub fn example(&self) -> ExamplePair {
        ExamplePair {
            nlq: self.nlq.clone(),
            query_text: self.query.clone(),
            language: self.language,
            db_id: self.db_id.clone(),
        }
    }

    /// Evaluation item; a missing prediction scores as unparseable.
    pub fn eval_item(&self) -> EvalItem {
        EvalItem {
            nlq: self.nlq.clone(),
            language: self.language,
            db_id: self.db_id.clone(),
            gold_text: self.query.clone(),
            pred_text: self.prediction.clone().unwrap_or_default(),
        }
    }
}

impl HasDbId for DatasetRecord {
    fn db_id(&self) -> &str {
        &self.db_id
    }
}

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetIoError> {
    let io = |source| DatasetIoError::Io {
        path: path.to_owned(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| DatasetIoError::Line {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetIoError> {
    let io = |source| DatasetIoError::Io {
        path: path.to_owned(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(to_jsonl(records).as_bytes()).map_err(io)
}

/// Databases keyed by id, loaded from the subdirectories of one directory.
pub type Catalog = BTreeMap<String, Database>;

pub fn load_catalog(dir: &Path) -> Result<Catalog, DatasetIoError> {
    let io = |source| DatasetIoError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut out = Catalog::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            let db = Database::load(&path)?;
            out.insert(db.name.clone(), db);
        }
    }
    Ok(out)
}
