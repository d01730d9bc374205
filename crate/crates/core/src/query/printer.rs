//! Canonical MongoDB-shell rendering of a [`Query`].
//!
//! Keys are left bare when they are plain ASCII identifiers and double-quoted
//! otherwise. Strings always use double quotes. No trailing semicolon.

use std::fmt::Write;

use super::{
    CmpOp, Comparison, Expr, FieldPath, Filter, Projection, ProjectionSource, Query, QueryBody,
    SortDirection, SortKey, Stage,
};
use crate::value::Value;

pub fn serialize(q: &Query) -> String {
    let mut out = String::with_capacity(64);
    out.push_str("db.");
    if is_identifier(&q.collection) && q.collection != "getCollection" {
        out.push_str(&q.collection);
    } else {
        out.push_str("getCollection(");
        write_str(&mut out, &q.collection);
        out.push(')');
    }
    match &q.body {
        QueryBody::Find(f) => {
            out.push_str(".find(");
            write_filter(&mut out, &f.filter);
            if let Some(p) = &f.projection {
                out.push_str(", ");
                write_projection(&mut out, p);
            }
            out.push(')');
            if let Some(keys) = &f.sort {
                out.push_str(".sort(");
                write_sort(&mut out, keys);
                out.push(')');
            }
            if let Some(n) = f.limit {
                let _ = write!(out, ".limit({n})");
            }
        }
        QueryBody::Aggregate(stages) => {
            out.push_str(".aggregate([");
            for (i, stage) in stages.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_stage(&mut out, stage);
            }
            out.push_str("])");
        }
    }
    out
}

/// Collection names only need to be valid shell identifiers, which may be
/// non-ASCII.
fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
        && !matches!(name, "true" | "false" | "null")
}

fn is_bare(key: &str) -> bool {
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
        && !matches!(key, "true" | "false" | "null")
}

fn write_key(out: &mut String, key: &str) {
    if is_bare(key) {
        out.push_str(key);
    } else {
        write_str(out, key);
    }
}

fn write_str(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{2028}' || c == '\u{2029}' => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_ref(out: &mut String, path: &FieldPath) {
    write_str(out, &format!("${path}"));
}

pub(crate) fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        // Debug formatting is the shortest round-tripping form and always
        // carries a `.` or exponent, so the float kind survives re-parsing.
        Value::Float(f) => {
            let _ = write!(out, "{f:?}");
        }
        Value::String(s) => write_str(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(doc) => {
            out.push('{');
            for (i, (k, v)) in doc.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_key(out, k);
                out.push_str(": ");
                write_value(out, v);
            }
            out.push('}');
        }
    }
}

fn write_stage(out: &mut String, stage: &Stage) {
    out.push_str("{$");
    out.push_str(stage.keyword());
    out.push_str(": ");
    match stage {
        Stage::Match(f) => write_filter(out, f),
        Stage::Project(p) => write_projection(out, p),
        Stage::Group(g) => {
            out.push_str("{_id: ");
            write_expr(out, &g.id);
            for acc in &g.accumulators {
                out.push_str(", ");
                write_key(out, &acc.alias);
                out.push_str(": {");
                out.push_str(acc.op.operator());
                out.push_str(": ");
                write_expr(out, &acc.arg);
                out.push('}');
            }
            out.push('}');
        }
        Stage::Sort(keys) => write_sort(out, keys),
        Stage::Limit(n) | Stage::Skip(n) => {
            let _ = write!(out, "{n}");
        }
        Stage::Unwind(p) => write_ref(out, p),
        Stage::Lookup(l) => {
            out.push_str("{from: ");
            write_str(out, &l.from);
            out.push_str(", localField: ");
            write_str(out, &l.local_field.to_string());
            out.push_str(", foreignField: ");
            write_str(out, &l.foreign_field.to_string());
            out.push_str(", as: ");
            write_str(out, &l.as_field.to_string());
            out.push('}');
        }
        Stage::Count(alias) => write_str(out, alias),
    }
    out.push('}');
}

fn write_sort(out: &mut String, keys: &[SortKey]) {
    out.push('{');
    for (i, k) in keys.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_key(out, &k.path.to_string());
        out.push_str(match k.direction {
            SortDirection::Asc => ": 1",
            SortDirection::Desc => ": -1",
        });
    }
    out.push('}');
}

fn write_projection(out: &mut String, p: &Projection) {
    out.push('{');
    for (i, item) in p.0.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_key(out, &item.path.to_string());
        out.push_str(": ");
        match &item.source {
            ProjectionSource::Include => out.push('1'),
            ProjectionSource::Exclude => out.push('0'),
            ProjectionSource::Ref(src) => write_ref(out, src),
        }
    }
    out.push('}');
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Field(p) => write_ref(out, p),
        Expr::Literal(v) => write_value(out, v),
        Expr::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, item);
            }
            out.push(']');
        }
        Expr::Object(entries) => {
            out.push('{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_key(out, k);
                out.push_str(": ");
                write_expr(out, v);
            }
            out.push('}');
        }
    }
}

/// A filter that can be written as one `path: {...}` entry.
enum Atom<'a> {
    Cmp(&'a Comparison),
    /// `$not` over comparisons on one path.
    Not(&'a FieldPath, Vec<&'a Comparison>),
}

impl<'a> Atom<'a> {
    fn of(f: &'a Filter) -> Option<Atom<'a>> {
        match f {
            Filter::Cmp(c) => Some(Atom::Cmp(c)),
            Filter::Not(inner) => {
                let cmps: Vec<&Comparison> = match inner.as_ref() {
                    Filter::Cmp(c) => vec![c],
                    Filter::And(xs) if xs.len() >= 2 => xs
                        .iter()
                        .map(|x| {
                            if let Filter::Cmp(c) = x {
                                Some(c)
                            } else {
                                None
                            }
                        })
                        .collect::<Option<_>>()?,
                    _ => return None,
                };
                let path = &cmps[0].path;
                let distinct = cmps
                    .iter()
                    .enumerate()
                    .all(|(i, c)| cmps[..i].iter().all(|d| d.op != c.op));
                (cmps.iter().all(|c| &c.path == path) && distinct).then_some(Atom::Not(path, cmps))
            }
            _ => None,
        }
    }

    fn path(&self) -> &'a FieldPath {
        match self {
            Atom::Cmp(c) => &c.path,
            Atom::Not(p, _) => p,
        }
    }

    fn key(&self) -> &'static str {
        match self {
            Atom::Cmp(c) => c.op.operator(),
            Atom::Not(..) => "$not",
        }
    }
}

/// One entry of an implicit-AND filter object.
enum Entry<'a> {
    Path(&'a FieldPath, Vec<Atom<'a>>),
    Logical(&'static str, &'a [Filter]),
}

impl Entry<'_> {
    fn key(&self) -> String {
        match self {
            Entry::Path(p, _) => p.to_string(),
            Entry::Logical(k, _) => (*k).to_owned(),
        }
    }
}

/// Splits a conjunction into object entries, or `None` when the conjunction
/// cannot be written as a single object without changing how it re-parses.
fn entries_of(items: &[Filter]) -> Option<Vec<Entry<'_>>> {
    let mut out: Vec<Entry> = Vec::new();
    for item in items {
        if let Some(atom) = Atom::of(item) {
            if let Some(Entry::Path(p, atoms)) = out.last_mut() {
                if *p == atom.path() {
                    if atoms.iter().any(|a| a.key() == atom.key()) {
                        return None;
                    }
                    atoms.push(atom);
                    continue;
                }
            }
            out.push(Entry::Path(atom.path(), vec![atom]));
            continue;
        }
        out.push(match item {
            Filter::Or(xs) if !xs.is_empty() => Entry::Logical("$or", xs),
            Filter::Not(inner) => match inner.as_ref() {
                Filter::Or(xs) if !xs.is_empty() => Entry::Logical("$nor", xs),
                _ => return None,
            },
            Filter::And(xs) if !xs.is_empty() => Entry::Logical("$and", xs),
            _ => return None,
        });
    }
    let mut keys: Vec<String> = out.iter().map(Entry::key).collect();
    keys.sort();
    keys.dedup();
    (keys.len() == out.len()).then_some(out)
}

fn write_filter(out: &mut String, f: &Filter) {
    match f {
        Filter::And(items) if items.len() != 1 => match entries_of(items) {
            Some(entries) => write_entries(out, &entries),
            None => write_logical(out, "$and", items),
        },
        // A one-element conjunction is kept distinct from its element.
        Filter::And(items) => write_logical(out, "$and", items),
        other => match entries_of(std::slice::from_ref(other)) {
            Some(entries) => write_entries(out, &entries),
            None => write_logical(out, "$nor", std::slice::from_ref(other)),
        },
    }
}

fn write_logical(out: &mut String, op: &str, items: &[Filter]) {
    out.push('{');
    out.push_str(op);
    out.push_str(": [");
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_filter(out, item);
    }
    out.push_str("]}");
}

fn write_entries(out: &mut String, entries: &[Entry]) {
    out.push('{');
    for (i, entry) in entries.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match entry {
            Entry::Logical(op, items) => {
                out.push_str(op);
                out.push_str(": [");
                for (j, item) in items.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    write_filter(out, item);
                }
                out.push(']');
            }
            Entry::Path(path, atoms) => {
                write_key(out, &path.to_string());
                out.push_str(": ");
                write_atoms(out, atoms);
            }
        }
    }
    out.push('}');
}

fn shorthand_eq<'a>(atoms: &[Atom<'a>]) -> Option<&'a Value> {
    match atoms {
        [Atom::Cmp(c)] if c.op == CmpOp::Eq => match &c.value {
            Value::Object(d) if d.keys().any(|k| k.starts_with('$')) => None,
            v => Some(v),
        },
        _ => None,
    }
}

fn write_atoms(out: &mut String, atoms: &[Atom]) {
    if let Some(v) = shorthand_eq(atoms) {
        write_value(out, v);
        return;
    }
    out.push('{');
    for (i, atom) in atoms.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(atom.key());
        out.push_str(": ");
        match atom {
            Atom::Cmp(c) => write_value(out, &c.value),
            Atom::Not(_, cmps) => {
                out.push('{');
                for (j, c) in cmps.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(c.op.operator());
                    out.push_str(": ");
                    write_value(out, &c.value);
                }
                out.push('}');
            }
        }
    }
    out.push('}');
}
