use std::convert::Infallible;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{rewrite, FieldPath, PathRole, Query, Rewriter};
use crate::schema::SchemaMap;

/// Collections with the fields a question refers to, in the
/// `# collection: field, parent.child` line format.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchemaLinkResult(pub Vec<(String, Vec<FieldPath>)>);

impl SchemaLinkResult {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn add(&mut self, collection: &str, path: FieldPath) {
        match self.0.iter_mut().find(|(c, _)| c == collection) {
            Some((_, fields)) => {
                if !fields.contains(&path) {
                    fields.push(path);
                }
            }
            None => self.0.push((collection.to_owned(), vec![path])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LinkFormatError {
    pub line: usize,
    pub message: String,
}

pub fn parse_schema_links(text: &str) -> Result<SchemaLinkResult, LinkFormatError> {
    let mut out = SchemaLinkResult::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| LinkFormatError {
            line: i + 1,
            message: message.to_owned(),
        };
        let rest = line
            .strip_prefix('#')
            .ok_or_else(|| err("expected `# collection: fields`"))?;
        // collection names cannot contain `:`; split on the first one
        let (coll, fields) = rest
            .split_once(':')
            .ok_or_else(|| err("missing `:` after the collection"))?;
        let coll = coll.trim();
        if coll.is_empty() {
            return Err(err("empty collection name"));
        }
        if out.0.iter().any(|(c, _)| c == coll) {
            return Err(err("collection listed twice"));
        }
        let mut paths = Vec::new();
        if fields.trim().is_empty() {
            out.0.push((coll.to_owned(), paths));
            continue;
        }
        for f in fields.split([',', '，']) {
            let p = FieldPath::parse(f.trim()).map_err(|e| err(&e.to_string()))?;
            paths.push(p);
        }
        out.0.push((coll.to_owned(), paths));
    }
    Ok(out)
}

pub fn serialize_schema_links(r: &SchemaLinkResult) -> String {
    let mut out = String::new();
    for (i, (coll, fields)) in r.0.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let list: Vec<String> = fields.iter().map(FieldPath::to_string).collect();
        if list.is_empty() {
            write!(out, "# {coll}:").expect("write to string");
        } else {
            write!(out, "# {coll}: {}", list.join(", ")).expect("write to string");
        }
    }
    out
}

/// Renders every collection with all its field paths, one line each.
pub fn render_schema(schema: &SchemaMap) -> String {
    let mut out = String::new();
    for (i, coll) in schema.collections.keys().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let list: Vec<String> = schema
            .paths(coll)
            .iter()
            .map(FieldPath::to_string)
            .collect();
        if list.is_empty() {
            write!(out, "# {coll}:").expect("write to string");
        } else {
            if list.is_empty() {
                write!(out, "# {coll}:").expect("write to string");
            } else {
                write!(out, "# {coll}: {}", list.join(", ")).expect("write to string");
            }
        }
    }
    out
}

struct LinkCollector<'a> {
    schema: &'a SchemaMap,
    primary: String,
    lookups: Vec<(FieldPath, String)>,
    links: SchemaLinkResult,
}

impl LinkCollector<'_> {
    fn add(&mut self, collection: &str, path: &FieldPath) {
        if self.schema.paths(collection).contains(path) {
            self.links.add(collection, path.clone());
        }
    }
}

impl Rewriter for LinkCollector<'_> {
    type Error = Infallible;

    fn path(&mut self, path: &FieldPath, role: PathRole<'_>) -> Result<FieldPath, Infallible> {
        match role {
            PathRole::Reference => {
                let owner = self
                    .lookups
                    .iter()
                    .rev()
                    .find(|(as_path, _)| path.starts_with(as_path));
                match owner {
                    Some((as_path, from)) => {
                        if let Some(rest) = path.tail(as_path.len()) {
                            let from = from.clone();
                            self.add(&from, &rest);
                        }
                    }
                    None => {
                        let primary = self.primary.clone();
                        self.add(&primary, path);
                    }
                }
            }
            PathRole::ForeignField { from } => self.add(from, path),
            PathRole::LookupAs { from } => self.lookups.push((path.clone(), from.to_owned())),
            PathRole::ProjectionAlias | PathRole::IdSuppression => {}
        }
        Ok(path.clone())
    }
}

/// The schema fields a query reads, grouped by collection. The main
/// collection is always listed first, even when no field is read.
/// Query-defined names are left out.
pub fn links_from_query(q: &Query, schema: &SchemaMap) -> SchemaLinkResult {
    let links = SchemaLinkResult(vec![(q.collection.clone(), Vec::new())]);
    let mut c = LinkCollector {
        schema,
        primary: q.collection.clone(),
        lookups: Vec::new(),
        links,
    };
    let Ok(_) = rewrite(q, &mut c);
    c.links
}
