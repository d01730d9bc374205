//! In-process document database and query executor.

mod exec;
mod paths;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::query::{Query, QueryError};
use crate::value::{Document, Value};

pub use exec::execute;
pub use paths::{get_path, set_path};

/// Relative float tolerance used when comparing result values.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

/// Optional file in a database directory mapping collection names to files.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}:{column}: {message}")]
    Format {
        file: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown collection `{0}`")]
    UnknownCollection(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

impl EngineError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EngineError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// A named set of collections. Immutable once loaded; document order is the
/// order of the source file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Database {
    pub name: String,
    pub collections: IndexMap<String, Vec<Document>>,
}

impl Database {
    pub fn new(name: impl Into<String>) -> Self {
        Database {
            name: name.into(),
            collections: IndexMap::new(),
        }
    }

    pub fn with_collection(mut self, name: impl Into<String>, docs: Vec<Document>) -> Self {
        self.collections.insert(name.into(), docs);
        self
    }

    pub fn collection(&self, name: &str) -> Result<&[Document], EngineError> {
        self.collections
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| EngineError::UnknownCollection(name.to_owned()))
    }

    pub fn execute(&self, q: &Query) -> Result<ResultSet, EngineError> {
        execute(self, q)
    }

    /// Parses a JSON object `{collection: [documents]}`.
    pub fn from_json(name: impl Into<String>, text: &str) -> Result<Self, EngineError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| format_error(Path::new("<inline>"), &e))?;
        let Value::Object(colls) = value else {
            return Err(EngineError::Format {
                file: PathBuf::from("<inline>"),
                line: 1,
                column: 1,
                message: "expected an object of collections".into(),
            });
        };
        let mut db = Database::new(name);
        for (coll, docs) in colls {
            let docs = documents(docs).map_err(|message| EngineError::Format {
                file: PathBuf::from("<inline>"),
                line: 1,
                column: 1,
                message: format!("collection `{coll}`: {message}"),
            })?;
            db.collections.insert(coll, docs);
        }
        Ok(db)
    }

    /// Loads a database directory: either every `*.json` file (collection
    /// name = file stem, sorted by name) or the files listed in `manifest.json`.
    pub fn load(dir: &Path) -> Result<Self, EngineError> {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut db = Database::new(name);
        let manifest = dir.join(MANIFEST_FILE);
        let files: Vec<(String, PathBuf)> = if manifest.is_file() {
            let text = fs::read_to_string(&manifest).map_err(|e| EngineError::io(&manifest, e))?;
            let map: BTreeMap<String, String> =
                serde_json::from_str(&text).map_err(|e| format_error(&manifest, &e))?;
            map.into_iter()
                .map(|(coll, file)| (coll, dir.join(file)))
                .collect()
        } else {
            let mut files = Vec::new();
            for entry in fs::read_dir(dir).map_err(|e| EngineError::io(dir, e))? {
                let path = entry.map_err(|e| EngineError::io(dir, e))?.path();
                if path.extension().is_some_and(|e| e == "json") && path.is_file() {
                    let stem = path
                        .file_stem()
                        .expect("file has a stem")
                        .to_string_lossy()
                        .into_owned();
                    files.push((stem, path));
                }
            }
            files.sort();
            files
        };
        for (coll, path) in files {
            let text = fs::read_to_string(&path).map_err(|e| EngineError::io(&path, e))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| format_error(&path, &e))?;
            let docs = documents(value).map_err(|message| EngineError::Format {
                file: path.clone(),
                line: 1,
                column: 1,
                message,
            })?;
            db.collections.insert(coll, docs);
        }
        Ok(db)
    }

    /// Writes one `<collection>.json` file per collection.
    pub fn dump(&self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir).map_err(|e| EngineError::io(dir, e))?;
        for (coll, docs) in &self.collections {
            let path = dir.join(format!("{coll}.json"));
            let text = serde_json::to_string_pretty(docs).expect("documents serialize");
            fs::write(&path, text + "\n").map_err(|e| EngineError::io(&path, e))?;
        }
        Ok(())
    }
}

fn documents(value: Value) -> Result<Vec<Document>, String> {
    let Value::Array(items) = value else {
        return Err("expected an array of objects".into());
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::Object(d) => Ok(d),
            other => Err(format!(
                "element {i} is a {}, expected an object",
                other.kind_name()
            )),
        })
        .collect()
}

fn format_error(file: &Path, e: &serde_json::Error) -> EngineError {
    EngineError::Format {
        file: file.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Query output. `ordered` is set when a sort determined the final order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ResultSet {
    pub docs: Vec<Document>,
    pub ordered: bool,
}

impl ResultSet {
    pub fn unordered(docs: Vec<Document>) -> Self {
        ResultSet {
            docs,
            ordered: false,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Pairs every element of `a` with a distinct element of `b` under `eq`
/// (greedy, first match wins).
pub(crate) fn multiset_eq<T>(a: &[T], b: &[T], eq: impl Fn(&T, &T) -> bool) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter()
        .all(|x| match (0..b.len()).find(|&j| !used[j] && eq(x, &b[j])) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        })
}

pub fn documents_equal(a: &Document, b: &Document) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|(k, v)| b.get(k).is_some_and(|w| v.approx_eq(w, FLOAT_TOLERANCE)))
}

/// Execution-result equality: element-wise when either side is ordered,
/// multiset comparison otherwise.
pub fn results_equal(a: &ResultSet, b: &ResultSet) -> bool {
    if a.ordered || b.ordered {
        a.docs.len() == b.docs.len()
            && a.docs
                .iter()
                .zip(&b.docs)
                .all(|(x, y)| documents_equal(x, y))
    } else {
        multiset_eq(&a.docs, &b.docs, documents_equal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc;

    #[test]
    fn results_equal_cases() {
        let a = ResultSet::unordered(vec![doc! {"x" => 1i64}, doc! {"x" => 2i64}]);
        let b = ResultSet::unordered(vec![doc! {"x" => 2i64}, doc! {"x" => 1.0}]);
        assert!(results_equal(&a, &a));
        assert!(results_equal(&a, &b));
        let mut ordered_b = b.clone();
        ordered_b.ordered = true;
        assert!(!results_equal(&a, &ordered_b));
        assert!(!results_equal(&a, &ResultSet::default()));
        let c = ResultSet::unordered(vec![doc! {"x" => 1i64}, doc! {"x" => 1i64}]);
        assert!(!results_equal(&a, &c));
        let renamed = ResultSet::unordered(vec![doc! {"y" => 1i64}, doc! {"x" => 2i64}]);
        assert!(!results_equal(&a, &renamed));
    }

    #[test]
    fn load_rejects_duplicate_keys() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.json"), "[{\"a\": 1,\n \"a\": 2}]").unwrap();
        match Database::load(dir.path()) {
            Err(EngineError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn load_rejects_non_objects() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.json"), "[1]").unwrap();
        assert!(matches!(
            Database::load(dir.path()),
            Err(EngineError::Format { .. })
        ));
    }

    #[test]
    fn empty_collection_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), "[]").unwrap();
        let db = Database::load(dir.path()).unwrap();
        assert_eq!(db.collections["a"].len(), 0);

        fs::write(dir.path().join("people-data.json"), r#"[{"n": 1}]"#).unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"{"people": "people-data.json"}"#,
        )
        .unwrap();
        let db = Database::load(dir.path()).unwrap();
        assert_eq!(db.collections.keys().collect::<Vec<_>>(), ["people"]);
    }

    #[test]
    fn dump_then_load_round_trips() {
        let db = Database::new("x")
            .with_collection(
                "人",
                vec![doc! {"名前" => "太郎", "f" => 1.0, "n" => Value::Null}],
            )
            .with_collection("e", vec![]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        db.dump(&path).unwrap();
        let back = Database::load(&path).unwrap();
        assert_eq!(back.collections.len(), 2);
        assert_eq!(back.collections["人"], db.collections["人"]);
        assert!(matches!(back.collections["人"][0]["f"], Value::Float(_)));
    }
}
