//! Schema inference, field translation maps, and dataset splitting.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{execute, Database, EngineError};
use crate::metrics::result_values_match;
use crate::query::{rewrite, FieldPath, NameRole, PathRole, Query, Rewriter, ValueRole};
use crate::retrieval::Language;
use crate::value::{Document, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldNode {
    pub name: String,
    pub kinds: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<FieldNode>,
}

impl FieldNode {
    fn new(name: &str) -> Self {
        FieldNode {
            name: name.to_owned(),
            kinds: BTreeSet::new(),
            children: Vec::new(),
        }
    }
}

/// Per-collection field trees. Children appear in first-seen order; arrays
/// of objects contribute their elements' fields as children.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchemaMap {
    pub collections: IndexMap<String, Vec<FieldNode>>,
}

fn child<'a>(nodes: &'a mut Vec<FieldNode>, name: &str) -> &'a mut FieldNode {
    match nodes.iter().position(|n| n.name == name) {
        Some(i) => &mut nodes[i],
        None => {
            nodes.push(FieldNode::new(name));
            nodes.last_mut().expect("just pushed")
        }
    }
}

fn observe_doc(nodes: &mut Vec<FieldNode>, doc: &Document) {
    for (k, v) in doc {
        observe_value(child(nodes, k), v);
    }
}

fn observe_value(node: &mut FieldNode, v: &Value) {
    node.kinds.insert(v.kind_name().to_owned());
    match v {
        Value::Object(d) => observe_doc(&mut node.children, d),
        Value::Array(xs) => {
            for x in xs {
                if let Value::Object(d) = x {
                    observe_doc(&mut node.children, d);
                }
            }
        }
        _ => {}
    }
}

fn collect_paths(nodes: &[FieldNode], prefix: &[String], out: &mut Vec<FieldPath>) {
    for n in nodes {
        let mut segs = prefix.to_vec();
        segs.push(n.name.clone());
        if let Ok(p) = FieldPath::from_segments(segs.clone()) {
            out.push(p);
        }
        collect_paths(&n.children, &segs, out);
    }
}

impl SchemaMap {
    /// Every field path of a collection, parents before children.
    pub fn paths(&self, collection: &str) -> Vec<FieldPath> {
        let mut out = Vec::new();
        if let Some(nodes) = self.collections.get(collection) {
            collect_paths(nodes, &[], &mut out);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

pub fn infer_schema(db: &Database) -> SchemaMap {
    let mut schema = SchemaMap::default();
    for (name, docs) in &db.collections {
        let mut nodes = Vec::new();
        for d in docs {
            observe_doc(&mut nodes, d);
        }
        schema.collections.insert(name.clone(), nodes);
    }
    schema
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("no translation for collection `{0}`")]
    UnmappedCollection(String),
    #[error("no translation for field `{path}` of collection `{collection}`")]
    UnmappedField { collection: String, path: String },
    #[error("invalid translation map: {0}")]
    InvalidMap(String),
}

/// Rename map from one language's collection and field names to another's.
/// Field keys are dotted paths in the source collection.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldTranslationMap {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub db_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_language: Option<Language>,
    pub collections: IndexMap<String, String>,
    #[serde(default)]
    pub fields: IndexMap<String, IndexMap<String, String>>,
}

impl FieldTranslationMap {
    /// Identity over every collection and path of the schema.
    pub fn identity(schema: &SchemaMap) -> Self {
        let mut m = FieldTranslationMap::default();
        for name in schema.collections.keys() {
            m.collections.insert(name.clone(), name.clone());
            let fields = schema
                .paths(name)
                .into_iter()
                .map(|p| (p.to_string(), p.to_string()))
                .collect();
            m.fields.insert(name.clone(), fields);
        }
        m
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let m: FieldTranslationMap =
            serde_json::from_str(text).map_err(|e| SchemaError::InvalidMap(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::InvalidMap(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    /// Paths parse, images keep their depth, and a mapped parent's image is
    /// the parent of its children's images.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let invalid = |msg: String| Err(SchemaError::InvalidMap(msg));
        for (coll, fields) in &self.fields {
            for (src, dst) in fields {
                let (Ok(s), Ok(d)) = (FieldPath::parse(src), FieldPath::parse(dst)) else {
                    return invalid(format!(
                        "{coll}: `{src}` -> `{dst}` is not a pair of field paths"
                    ));
                };
                if s.len() != d.len() {
                    return invalid(format!("{coll}: `{src}` -> `{dst}` changes depth"));
                }
                if let (Some(sp), Some(dp)) = (s.parent(), d.parent()) {
                    if let Some(parent_image) = fields.get(&sp.to_string()) {
                        if *parent_image != dp.to_string() {
                            return invalid(format!(
                                "{coll}: `{src}` -> `{dst}` disagrees with parent `{sp}` -> `{parent_image}`"
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn collection(&self, name: &str) -> Result<&str, SchemaError> {
        self.collections
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| SchemaError::UnmappedCollection(name.to_owned()))
    }

    pub fn field(&self, collection: &str, path: &FieldPath) -> Result<FieldPath, SchemaError> {
        self.fields
            .get(collection)
            .and_then(|f| f.get(&path.to_string()))
            .and_then(|img| FieldPath::parse(img).ok())
            .ok_or_else(|| SchemaError::UnmappedField {
                collection: collection.to_owned(),
                path: path.to_string(),
            })
    }

    /// The reverse map. Fails when two names share an image.
    pub fn inverse(&self) -> Result<Self, SchemaError> {
        let mut inv = FieldTranslationMap {
            db_id: self.db_id.clone(),
            ..Default::default()
        };
        for (src, dst) in &self.collections {
            if inv.collections.insert(dst.clone(), src.clone()).is_some() {
                return Err(SchemaError::InvalidMap(format!(
                    "collection image `{dst}` is not unique"
                )));
            }
        }
        for (coll, fields) in &self.fields {
            let target = self
                .collections
                .get(coll)
                .cloned()
                .unwrap_or_else(|| coll.clone());
            let mut out = IndexMap::new();
            for (src, dst) in fields {
                if out.insert(dst.clone(), src.clone()).is_some() {
                    return Err(SchemaError::InvalidMap(format!(
                        "{coll}: field image `{dst}` is not unique"
                    )));
                }
            }
            inv.fields.insert(target, out);
        }
        Ok(inv)
    }

    /// Output-name translation for names the query defines itself: the exact
    /// path if mapped, otherwise each segment that is the last segment of a
    /// mapped path takes that path's image segment.
    fn alias(&self, collection: &str, path: &FieldPath) -> FieldPath {
        if let Ok(p) = self.field(collection, path) {
            return p;
        }
        let Some(fields) = self.fields.get(collection) else {
            return path.clone();
        };
        let segs = path
            .segments()
            .iter()
            .map(|s| {
                fields
                    .iter()
                    .find(|(src, _)| src.rsplit('.').next() == Some(s.as_str()))
                    .and_then(|(_, dst)| dst.rsplit('.').next())
                    .unwrap_or(s)
                    .to_owned()
            })
            .collect();
        FieldPath::from_segments(segs).unwrap_or_else(|_| path.clone())
    }
}

fn rename_doc(
    m: &FieldTranslationMap,
    coll: &str,
    doc: &Document,
    prefix: &[String],
) -> Result<Document, SchemaError> {
    let mut out = Document::with_capacity(doc.len());
    for (k, v) in doc {
        let mut segs = prefix.to_vec();
        segs.push(k.clone());
        let path =
            FieldPath::from_segments(segs.clone()).map_err(|_| SchemaError::UnmappedField {
                collection: coll.to_owned(),
                path: segs.join("."),
            })?;
        let image = m.field(coll, &path)?;
        out.insert(image.last().to_owned(), rename_value(m, coll, v, &segs)?);
    }
    Ok(out)
}

fn rename_value(
    m: &FieldTranslationMap,
    coll: &str,
    v: &Value,
    prefix: &[String],
) -> Result<Value, SchemaError> {
    Ok(match v {
        Value::Object(d) => Value::Object(rename_doc(m, coll, d, prefix)?),
        Value::Array(xs) => Value::Array(
            xs.iter()
                .map(|x| rename_value(m, coll, x, prefix))
                .collect::<Result<_, _>>()?,
        ),
        other => other.clone(),
    })
}

/// Renames collections and every object key; values are left as they are.
pub fn apply_map(db: &Database, m: &FieldTranslationMap) -> Result<Database, SchemaError> {
    let mut out = Database::new(db.name.clone());
    for (coll, docs) in &db.collections {
        let name = m.collection(coll)?;
        let docs = docs
            .iter()
            .map(|d| rename_doc(m, coll, d, &[]))
            .collect::<Result<Vec<_>, _>>()?;
        out.collections.insert(name.to_owned(), docs);
    }
    Ok(out)
}

struct MapRewriter<'a> {
    map: &'a FieldTranslationMap,
    collection: String,
    /// `as` paths of lookups seen so far with their foreign collection.
    lookups: Vec<(FieldPath, FieldPath, String)>,
    aliases: BTreeSet<String>,
}

impl MapRewriter<'_> {
    fn reference(&self, path: &FieldPath) -> Result<FieldPath, SchemaError> {
        if path.first() == "_id" {
            return Ok(match path.tail(1) {
                Some(rest) => FieldPath::parse("_id")
                    .expect("valid")
                    .join(&self.map.alias(&self.collection, &rest)),
                None => path.clone(),
            });
        }
        for (src, dst, from) in self.lookups.iter().rev() {
            if path.starts_with(src) {
                return Ok(match path.tail(src.len()) {
                    Some(rest) => dst.join(&self.map.field(from, &rest)?),
                    None => dst.clone(),
                });
            }
        }
        match self.map.field(&self.collection, path) {
            Ok(p) => Ok(p),
            Err(_) if self.aliases.contains(path.first()) => {
                Ok(self.map.alias(&self.collection, path))
            }
            Err(e) => Err(e),
        }
    }

    fn define(&mut self, path: &FieldPath) -> FieldPath {
        self.aliases.insert(path.first().to_owned());
        self.map.alias(&self.collection, path)
    }
}

impl Rewriter for MapRewriter<'_> {
    type Error = SchemaError;

    fn collection(&mut self, name: &str, _primary: bool) -> Result<String, SchemaError> {
        self.map.collection(name).map(str::to_owned)
    }

    fn path(&mut self, path: &FieldPath, role: PathRole<'_>) -> Result<FieldPath, SchemaError> {
        match role {
            PathRole::Reference => self.reference(path),
            PathRole::IdSuppression => Ok(path.clone()),
            PathRole::ProjectionAlias => Ok(self.define(path)),
            PathRole::ForeignField { from } => self.map.field(from, path),
            PathRole::LookupAs { from } => {
                let image = self.define(path);
                self.lookups
                    .push((path.clone(), image.clone(), from.to_owned()));
                Ok(image)
            }
        }
    }

    fn name(&mut self, name: &str, role: NameRole) -> Result<String, SchemaError> {
        let Ok(path) = FieldPath::parse(name) else {
            return Ok(name.to_owned());
        };
        Ok(match role {
            NameRole::GroupAlias | NameRole::CountAlias => self.define(&path).to_string(),
            NameRole::ExprKey => self.map.alias(&self.collection, &path).to_string(),
        })
    }

    fn value(&mut self, value: &Value, _role: ValueRole) -> Result<Value, SchemaError> {
        Ok(value.clone())
    }
}

/// Renames the collection and every field reference of a query. Names the
/// query defines (projection and group aliases, lookup `as`, count alias)
/// follow the map where it has a matching path and are kept otherwise.
pub fn apply_map_query(q: &Query, m: &FieldTranslationMap) -> Result<Query, SchemaError> {
    let mut r = MapRewriter {
        map: m,
        collection: q.collection.clone(),
        lookups: Vec::new(),
        aliases: BTreeSet::new(),
    };
    rewrite(q, &mut r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Translated,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Translated => "translated",
        })
    }
}

#[derive(Debug, Error)]
#[error("{side} query failed: {error}")]
pub struct VerifyError {
    pub side: Side,
    #[source]
    pub error: EngineError,
}

/// Whether both queries produce the same values (field names may differ).
pub fn verify_translation(
    db_src: &Database,
    q_src: &Query,
    db_t: &Database,
    q_t: &Query,
) -> Result<bool, VerifyError> {
    let a = execute(db_src, q_src).map_err(|error| VerifyError {
        side: Side::Source,
        error,
    })?;
    let b = execute(db_t, q_t).map_err(|error| VerifyError {
        side: Side::Translated,
        error,
    })?;
    Ok(result_values_match(&a, &b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Collision {
    pub scope: String,
    pub image: String,
    pub first: String,
    pub second: String,
}

impl fmt::Display for Collision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: `{}` and `{}` both become `{}`",
            self.scope, self.first, self.second, self.image
        )
    }
}

fn pairs_sharing_image(scope: &str, names: &[(String, String)], out: &mut Vec<Collision>) {
    for (i, (a, img_a)) in names.iter().enumerate() {
        for (b, img_b) in &names[i + 1..] {
            if img_a == img_b && a != b {
                out.push(Collision {
                    scope: scope.to_owned(),
                    image: img_a.clone(),
                    first: a.clone(),
                    second: b.clone(),
                });
            }
        }
    }
}

/// Distinct source names whose images coincide: collections with each
/// other, fields within a collection, and collections with top-level fields.
pub fn detect_collisions(schema: &SchemaMap, m: &FieldTranslationMap) -> Vec<Collision> {
    let mut out = Vec::new();
    let colls: Vec<(String, String)> = schema
        .collections
        .keys()
        .filter_map(|c| m.collections.get(c).map(|img| (c.clone(), img.clone())))
        .collect();
    pairs_sharing_image("collections", &colls, &mut out);
    let mut top_level: Vec<(String, String, String)> = Vec::new();
    for coll in schema.collections.keys() {
        let fields: Vec<(String, String)> = schema
            .paths(coll)
            .into_iter()
            .filter_map(|p| {
                m.field(coll, &p)
                    .ok()
                    .map(|img| (p.to_string(), img.to_string()))
            })
            .collect();
        pairs_sharing_image(coll, &fields, &mut out);
        top_level.extend(
            fields
                .into_iter()
                .filter(|(p, _)| !p.contains('.'))
                .map(|(p, img)| (coll.clone(), p, img)),
        );
    }
    for (c, c_img) in &colls {
        let mut seen = BTreeSet::new();
        for (owner, field, img) in &top_level {
            if img == c_img && field != c && seen.insert(field.clone()) {
                out.push(Collision {
                    scope: format!("collection vs field of {owner}"),
                    image: img.clone(),
                    first: c.clone(),
                    second: field.clone(),
                });
            }
        }
    }
    out
}

pub trait HasDbId {
    fn db_id(&self) -> &str;
}

impl HasDbId for crate::retrieval::ExamplePair {
    fn db_id(&self) -> &str {
        &self.db_id
    }
}

impl HasDbId for crate::metrics::EvalItem {
    fn db_id(&self) -> &str {
        &self.db_id
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("split needs at least 2 distinct databases, found {0}")]
    TooFewDatabases(usize),
    #[error("ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
}

/// Database-level split: `round(ratio * databases)` databases (at least one
/// per side) go to train. Items keep their input order.
pub fn split_dataset<T: HasDbId + Clone>(
    items: &[T],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), SplitError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SplitError::BadRatio(ratio));
    }
    let mut ids: Vec<&str> = items
        .iter()
        .map(HasDbId::db_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = ids.len();
    if n < 2 {
        return Err(SplitError::TooFewDatabases(n));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let train_ids: HashMap<&str, ()> = ids[..n_train].iter().map(|id| (*id, ())).collect();
    let (train, test) = items
        .iter()
        .cloned()
        .partition(|it| train_ids.contains_key(it.db_id()));
    Ok((train, test))
}
