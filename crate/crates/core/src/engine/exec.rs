use std::cmp::Ordering;
use std::collections::HashMap;

use indexmap::IndexMap;
use regex::Regex;

use super::paths::{eval_path, get_path, match_candidates, remove_path, set_path};
use super::{Database, EngineError, ResultSet};
use crate::query::{
    AccumulatorOp, CmpOp, Comparison, Expr, FieldPath, Filter, Group, Lookup, Projection,
    ProjectionSource, Query, QueryBody, QueryError, SortDirection, SortKey, Stage,
};
use crate::value::{Document, Value};

/// Runs a query against the database. The database is never modified.
///
/// `find` applies filter, sort, limit, then projection.
pub fn execute(db: &Database, q: &Query) -> Result<ResultSet, EngineError> {
    let mut docs: Vec<Document> = db.collection(&q.collection)?.to_vec();
    let mut ordered = false;
    match &q.body {
        QueryBody::Find(f) => {
            docs = filter_docs(docs, &f.filter)?;
            if let Some(keys) = &f.sort {
                sort_docs(&mut docs, keys);
                ordered = true;
            }
            if let Some(n) = f.limit {
                docs.truncate(usize::try_from(n).unwrap_or(usize::MAX));
            }
            if let Some(p) = &f.projection {
                docs = project(docs, p);
            }
        }
        QueryBody::Aggregate(stages) => {
            for stage in stages {
                docs = match stage {
                    Stage::Match(f) => filter_docs(docs, f)?,
                    Stage::Project(p) => project(docs, p),
                    Stage::Group(g) => {
                        ordered = false;
                        group(docs, g)
                    }
                    Stage::Sort(keys) => {
                        sort_docs(&mut docs, keys);
                        ordered = true;
                        docs
                    }
                    Stage::Limit(n) => {
                        docs.truncate(usize::try_from(*n).unwrap_or(usize::MAX));
                        docs
                    }
                    Stage::Skip(n) => docs
                        .into_iter()
                        .skip(usize::try_from(*n).unwrap_or(usize::MAX))
                        .collect(),
                    Stage::Unwind(p) => unwind(docs, p),
                    Stage::Lookup(l) => lookup(db, docs, l)?,
                    Stage::Count(alias) => {
                        ordered = false;
                        if docs.is_empty() {
                            docs
                        } else {
                            let mut d = Document::new();
                            d.insert(alias.clone(), Value::Int(docs.len() as i64));
                            vec![d]
                        }
                    }
                };
            }
        }
    }
    Ok(ResultSet { docs, ordered })
}

fn filter_docs(docs: Vec<Document>, f: &Filter) -> Result<Vec<Document>, EngineError> {
    let mut regexes = HashMap::new();
    compile_regexes(f, &mut regexes)?;
    Ok(docs
        .into_iter()
        .filter(|d| matches(d, f, &regexes))
        .collect())
}

fn compile_regexes(f: &Filter, out: &mut HashMap<String, Regex>) -> Result<(), EngineError> {
    match f {
        Filter::And(xs) | Filter::Or(xs) => xs.iter().try_for_each(|x| compile_regexes(x, out)),
        Filter::Not(x) => compile_regexes(x, out),
        Filter::Cmp(Comparison {
            op: CmpOp::Regex,
            value,
            ..
        }) => {
            let Value::String(pattern) = value else {
                return Err(
                    QueryError::Unsupported("$regex with a non-string pattern".into()).into(),
                );
            };
            if !out.contains_key(pattern) {
                let re = Regex::new(pattern).map_err(|e| {
                    QueryError::Unsupported(format!("regex pattern `{pattern}`: {e}"))
                })?;
                out.insert(pattern.clone(), re);
            }
            Ok(())
        }
        Filter::Cmp(_) => Ok(()),
    }
}

pub(crate) fn matches(doc: &Document, f: &Filter, regexes: &HashMap<String, Regex>) -> bool {
    match f {
        Filter::And(xs) => xs.iter().all(|x| matches(doc, x, regexes)),
        Filter::Or(xs) => xs.iter().any(|x| matches(doc, x, regexes)),
        Filter::Not(x) => !matches(doc, x, regexes),
        Filter::Cmp(c) => compare(doc, c, regexes),
    }
}

fn compare(doc: &Document, c: &Comparison, regexes: &HashMap<String, Regex>) -> bool {
    let found = match_candidates(doc, c.path.segments());
    let eq = |v: &Value| {
        if v.is_null() {
            found.is_empty() || found.iter().any(|x| x.is_null())
        } else {
            found.contains(&v)
        }
    };
    let ordered = |accept: fn(Ordering) -> bool| {
        found
            .iter()
            .any(|x| x.bracket() == c.value.bracket() && accept(x.total_cmp(&c.value)))
    };
    match c.op {
        CmpOp::Eq => eq(&c.value),
        CmpOp::Ne => !eq(&c.value),
        CmpOp::Gt => ordered(|o| o == Ordering::Greater),
        CmpOp::Gte => ordered(|o| o != Ordering::Less),
        CmpOp::Lt => ordered(|o| o == Ordering::Less),
        CmpOp::Lte => ordered(|o| o != Ordering::Greater),
        CmpOp::In => c.value.as_array().is_some_and(|xs| xs.iter().any(eq)),
        CmpOp::Nin => !c.value.as_array().is_some_and(|xs| xs.iter().any(eq)),
        CmpOp::Exists => found.is_empty() != c.value.is_truthy(),
        CmpOp::Regex => {
            let re = &regexes[c.value.as_str().expect("regex patterns are strings")];
            found
                .iter()
                .any(|x| x.as_str().is_some_and(|s| re.is_match(s)))
        }
    }
}

fn sort_key(doc: &Document, k: &SortKey) -> Value {
    let found = match_candidates(doc, k.path.segments());
    // arrays sort by their smallest element ascending, largest descending
    let leaves = found
        .iter()
        .copied()
        .filter(|v| !matches!(v, Value::Array(_)));
    let pick = match k.direction {
        SortDirection::Asc => leaves.min_by(|a, b| a.total_cmp(b)),
        SortDirection::Desc => leaves.max_by(|a, b| a.total_cmp(b)),
    };
    pick.cloned().unwrap_or(Value::Null)
}

pub(crate) fn sort_docs(docs: &mut Vec<Document>, keys: &[SortKey]) {
    let mut keyed: Vec<(Vec<Value>, Document)> = docs
        .drain(..)
        .map(|d| (keys.iter().map(|k| sort_key(&d, k)).collect(), d))
        .collect();
    keyed.sort_by(|(a, _), (b, _)| {
        for ((x, y), k) in a.iter().zip(b).zip(keys) {
            let o = x.total_cmp(y);
            let o = if k.direction == SortDirection::Desc {
                o.reverse()
            } else {
                o
            };
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    });
    docs.extend(keyed.into_iter().map(|(_, d)| d));
}

enum Node {
    Include,
    Computed(FieldPath),
    Branch(IndexMap<String, Node>),
}

fn insert_node(tree: &mut IndexMap<String, Node>, segs: &[String], leaf: Node) {
    let (first, rest) = segs.split_first().expect("non-empty path");
    if rest.is_empty() {
        tree.insert(first.clone(), leaf);
        return;
    }
    let slot = tree
        .entry(first.clone())
        .or_insert_with(|| Node::Branch(IndexMap::new()));
    if let Node::Branch(sub) = slot {
        insert_node(sub, rest, leaf);
    }
}

fn apply_tree(
    tree: &IndexMap<String, Node>,
    cur: Option<&Value>,
    root: &Document,
) -> Option<Value> {
    match cur {
        Some(Value::Object(d)) => {
            let mut out = Document::new();
            for (key, node) in tree {
                let v = match node {
                    Node::Include => d.get(key).cloned(),
                    Node::Computed(src) => eval_path(root, src.segments()),
                    Node::Branch(sub) => apply_tree(sub, d.get(key), root),
                };
                if let Some(v) = v {
                    out.insert(key.clone(), v);
                }
            }
            Some(Value::Object(out))
        }
        Some(Value::Array(xs)) => Some(Value::Array(
            xs.iter()
                .filter(|x| matches!(x, Value::Object(_) | Value::Array(_)))
                .filter_map(|x| apply_tree(tree, Some(x), root))
                .collect(),
        )),
        _ => {
            // only computed fields can appear under a missing or scalar parent
            let mut out = Document::new();
            for (key, node) in tree {
                let v = match node {
                    Node::Include => None,
                    Node::Computed(src) => eval_path(root, src.segments()),
                    Node::Branch(sub) => apply_tree(sub, None, root),
                };
                if let Some(v) = v {
                    out.insert(key.clone(), v);
                }
            }
            (!out.is_empty()).then_some(Value::Object(out))
        }
    }
}

pub(crate) fn project(docs: Vec<Document>, p: &Projection) -> Vec<Document> {
    if !p.is_inclusion() {
        return docs
            .into_iter()
            .map(|mut d| {
                for item in &p.0 {
                    remove_path(&mut d, item.path.segments());
                }
                d
            })
            .collect();
    }
    let mut tree = IndexMap::new();
    if !p.excludes_id() {
        tree.insert("_id".to_owned(), Node::Include);
    }
    for item in &p.0 {
        match &item.source {
            ProjectionSource::Include => {
                insert_node(&mut tree, item.path.segments(), Node::Include)
            }
            ProjectionSource::Ref(src) => {
                insert_node(&mut tree, item.path.segments(), Node::Computed(src.clone()))
            }
            ProjectionSource::Exclude => {}
        }
    }
    docs.into_iter()
        .map(|d| {
            let root = Value::Object(d);
            let Some(Value::Object(out)) =
                apply_tree(&tree, Some(&root), root.as_object().expect("object"))
            else {
                unreachable!("objects project to objects")
            };
            out
        })
        .collect()
}

pub(crate) fn eval_expr(doc: &Document, e: &Expr) -> Option<Value> {
    match e {
        Expr::Field(p) => eval_path(doc, p.segments()),
        Expr::Literal(v) => Some(v.clone()),
        Expr::Array(xs) => Some(Value::Array(
            xs.iter()
                .map(|x| eval_expr(doc, x).unwrap_or(Value::Null))
                .collect(),
        )),
        Expr::Object(entries) => Some(Value::Object(
            entries
                .iter()
                .filter_map(|(k, x)| eval_expr(doc, x).map(|v| (k.clone(), v)))
                .collect(),
        )),
    }
}

fn accumulate(op: AccumulatorOp, values: Vec<Option<Value>>) -> Value {
    match op {
        AccumulatorOp::Sum => {
            let mut int: Option<i64> = Some(0);
            let mut float = 0.0f64;
            for v in values.into_iter().flatten() {
                match v {
                    Value::Int(i) => {
                        float += i as f64;
                        int = int.and_then(|s| s.checked_add(i));
                    }
                    Value::Float(f) => {
                        float += f;
                        int = None;
                    }
                    _ => {}
                }
            }
            int.map_or(Value::Float(float), Value::Int)
        }
        AccumulatorOp::Avg => {
            let nums: Vec<f64> = values.iter().flatten().filter_map(Value::as_f64).collect();
            if nums.is_empty() {
                Value::Null
            } else {
                Value::Float(nums.iter().sum::<f64>() / nums.len() as f64)
            }
        }
        AccumulatorOp::Min | AccumulatorOp::Max => {
            let present = values.into_iter().flatten().filter(|v| !v.is_null());
            let pick = if op == AccumulatorOp::Min {
                present.min_by(|a, b| a.total_cmp(b))
            } else {
                present.max_by(|a, b| a.total_cmp(b))
            };
            pick.unwrap_or(Value::Null)
        }
        AccumulatorOp::Push => Value::Array(values.into_iter().flatten().collect()),
        AccumulatorOp::AddToSet => {
            let mut set: Vec<Value> = Vec::new();
            for v in values.into_iter().flatten() {
                if !set.contains(&v) {
                    set.push(v);
                }
            }
            Value::Array(set)
        }
        AccumulatorOp::First => values.into_iter().next().flatten().unwrap_or(Value::Null),
        AccumulatorOp::Last => values.into_iter().last().flatten().unwrap_or(Value::Null),
    }
}

fn group(docs: Vec<Document>, g: &Group) -> Vec<Document> {
    let mut keys: Vec<Value> = Vec::new();
    let mut members: Vec<Vec<Document>> = Vec::new();
    for d in docs {
        let key = eval_expr(&d, &g.id).unwrap_or(Value::Null);
        match keys.iter().position(|k| *k == key) {
            Some(i) => members[i].push(d),
            None => {
                keys.push(key);
                members.push(vec![d]);
            }
        }
    }
    keys.into_iter()
        .zip(members)
        .map(|(key, group_docs)| {
            let mut out = Document::new();
            out.insert("_id".to_owned(), key);
            for acc in &g.accumulators {
                let values = group_docs.iter().map(|d| eval_expr(d, &acc.arg)).collect();
                out.insert(acc.alias.clone(), accumulate(acc.op, values));
            }
            out
        })
        .collect()
}

fn unwind(docs: Vec<Document>, p: &FieldPath) -> Vec<Document> {
    let mut out = Vec::new();
    for d in docs {
        let Some(Value::Array(items)) = get_path(&d, p.segments()) else {
            continue;
        };
        for item in items.clone() {
            let mut copy = d.clone();
            set_path(&mut copy, p.segments(), item);
            out.push(copy);
        }
    }
    out
}

fn lookup(db: &Database, docs: Vec<Document>, l: &Lookup) -> Result<Vec<Document>, EngineError> {
    let foreign = db.collection(&l.from)?;
    let null = Value::Null;
    Ok(docs
        .into_iter()
        .map(|mut d| {
            let local = get_path(&d, l.local_field.segments())
                .unwrap_or(&null)
                .clone();
            let joined: Vec<Value> = foreign
                .iter()
                .filter(|f| *get_path(f, l.foreign_field.segments()).unwrap_or(&null) == local)
                .map(|f| Value::Object(f.clone()))
                .collect();
            set_path(&mut d, l.as_field.segments(), Value::Array(joined));
            d
        })
        .collect())
}
