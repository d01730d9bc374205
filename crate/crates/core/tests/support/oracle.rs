//! Brute-force evaluator for a small pipeline language over `serde_json`
//! documents, written from the operator definitions without reusing engine
//! code, plus random databases and pipelines to feed it.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value as J};

pub type Doc = Map<String, J>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Eq,
    Ne,
    Gt,
    Gte,
    Lt,
    Lte,
    In,
    Nin,
    Exists,
}

impl Op {
    const ALL: [Op; 9] = [
        Op::Eq,
        Op::Ne,
        Op::Gt,
        Op::Gte,
        Op::Lt,
        Op::Lte,
        Op::In,
        Op::Nin,
        Op::Exists,
    ];

    fn name(self) -> &'static str {
        match self {
            Op::Eq => "$eq",
            Op::Ne => "$ne",
            Op::Gt => "$gt",
            Op::Gte => "$gte",
            Op::Lt => "$lt",
            Op::Lte => "$lte",
            Op::In => "$in",
            Op::Nin => "$nin",
            Op::Exists => "$exists",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp(String, Op, J),
    And(Vec<Cond>),
    Or(Vec<Cond>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Acc {
    Sum,
    Avg,
    Min,
    Max,
    First,
    Last,
    Push,
}

impl Acc {
    const ALL: [Acc; 7] = [
        Acc::Sum,
        Acc::Avg,
        Acc::Min,
        Acc::Max,
        Acc::First,
        Acc::Last,
        Acc::Push,
    ];

    fn name(self) -> &'static str {
        match self {
            Acc::Sum => "$sum",
            Acc::Avg => "$avg",
            Acc::Min => "$min",
            Acc::Max => "$max",
            Acc::First => "$first",
            Acc::Last => "$last",
            Acc::Push => "$push",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AccArg {
    Field(String),
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Match(Cond),
    Sort(Vec<(String, bool)>),
    Limit(usize),
    Unwind(String),
    /// Group key field (`None` groups everything under null).
    Group(Option<String>, Vec<(String, Acc, AccArg)>),
}

// ---------------------------------------------------------------- rendering

fn json_text(v: &J) -> String {
    serde_json::to_string(v).expect("json")
}

fn cond_text(c: &Cond) -> String {
    match c {
        Cond::Cmp(p, op, v) => format!(
            "{{{}: {{{}: {}}}}}",
            json_text(&json!(p)),
            op.name(),
            json_text(v)
        ),
        Cond::And(xs) => format!(
            "{{$and: [{}]}}",
            xs.iter().map(cond_text).collect::<Vec<_>>().join(", ")
        ),
        Cond::Or(xs) => format!(
            "{{$or: [{}]}}",
            xs.iter().map(cond_text).collect::<Vec<_>>().join(", ")
        ),
    }
}

pub fn step_text(s: &Step) -> String {
    match s {
        Step::Match(c) => format!("{{$match: {}}}", cond_text(c)),
        Step::Sort(keys) => {
            let ks: Vec<String> = keys
                .iter()
                .map(|(p, asc)| format!("{}: {}", json_text(&json!(p)), if *asc { 1 } else { -1 }))
                .collect();
            format!("{{$sort: {{{}}}}}", ks.join(", "))
        }
        Step::Limit(n) => format!("{{$limit: {n}}}"),
        Step::Unwind(p) => format!("{{$unwind: \"${p}\"}}"),
        Step::Group(key, accs) => {
            let id = key
                .as_ref()
                .map_or("null".to_owned(), |k| format!("\"${k}\""));
            let mut parts = vec![format!("_id: {id}")];
            for (alias, acc, arg) in accs {
                let a = match arg {
                    AccArg::Field(f) => format!("\"${f}\""),
                    AccArg::One => "1".to_owned(),
                };
                parts.push(format!("{alias}: {{{}: {a}}}", acc.name()));
            }
            format!("{{$group: {{{}}}}}", parts.join(", "))
        }
    }
}

pub fn pipeline_text(collection: &str, steps: &[Step]) -> String {
    format!(
        "db.{collection}.aggregate([{}])",
        steps.iter().map(step_text).collect::<Vec<_>>().join(", ")
    )
}

// ---------------------------------------------------------------- semantics

fn rank(v: &J) -> u8 {
    match v {
        J::Null => 0,
        J::Number(_) => 1,
        J::String(_) => 2,
        J::Array(_) => 3,
        J::Object(_) => 4,
        J::Bool(_) => 5,
    }
}

fn num(v: &J) -> f64 {
    v.as_f64().expect("number")
}

pub fn order(a: &J, b: &J) -> Ordering {
    match rank(a).cmp(&rank(b)) {
        Ordering::Equal => {}
        o => return o,
    }
    match (a, b) {
        (J::Number(_), J::Number(_)) => num(a).partial_cmp(&num(b)).expect("finite"),
        (J::String(x), J::String(y)) => x.cmp(y),
        (J::Bool(x), J::Bool(y)) => x.cmp(y),
        (J::Array(x), J::Array(y)) => {
            for (l, r) in x.iter().zip(y) {
                let o = order(l, r);
                if o != Ordering::Equal {
                    return o;
                }
            }
            x.len().cmp(&y.len())
        }
        (J::Object(x), J::Object(y)) => {
            let mut xs: Vec<_> = x.iter().collect();
            let mut ys: Vec<_> = y.iter().collect();
            xs.sort_by(|p, q| p.0.cmp(q.0));
            ys.sort_by(|p, q| p.0.cmp(q.0));
            for ((lk, lv), (rk, rv)) in xs.iter().zip(&ys) {
                let o = lk.cmp(rk).then_with(|| order(lv, rv));
                if o != Ordering::Equal {
                    return o;
                }
            }
            xs.len().cmp(&ys.len())
        }
        _ => Ordering::Equal,
    }
}

/// Deep equality; numbers compare by value, objects ignore key order.
pub fn same(a: &J, b: &J) -> bool {
    match (a, b) {
        (J::Number(_), J::Number(_)) => num(a) == num(b),
        (J::Array(x), J::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(l, r)| same(l, r))
        }
        (J::Object(x), J::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| same(v, w)))
        }
        _ => a == b,
    }
}

/// Values a filter path can match: arrays along the way are searched
/// element by element, and an array at the end counts both as a whole and
/// through its elements.
fn reachable<'a>(doc: &'a Doc, path: &str) -> Vec<&'a J> {
    let segs: Vec<&str> = path.split('.').collect();
    let mut frontier: Vec<&J> = match doc.get(segs[0]) {
        Some(v) => vec![v],
        None => return Vec::new(),
    };
    for seg in &segs[1..] {
        let mut next = Vec::new();
        for v in frontier {
            match v {
                J::Object(m) => next.extend(m.get(*seg)),
                J::Array(xs) => next.extend(
                    xs.iter()
                        .filter_map(|x| x.as_object())
                        .filter_map(|m| m.get(*seg)),
                ),
                _ => {}
            }
        }
        frontier = next;
    }
    let mut out = Vec::new();
    for v in frontier {
        out.push(v);
        if let J::Array(xs) = v {
            out.extend(xs.iter());
        }
    }
    out
}

fn truthy(v: &J) -> bool {
    match v {
        J::Null => false,
        J::Bool(b) => *b,
        J::Number(_) => num(v) != 0.0,
        _ => true,
    }
}

fn holds(doc: &Doc, c: &Cond) -> bool {
    match c {
        Cond::And(xs) => xs.iter().all(|x| holds(doc, x)),
        Cond::Or(xs) => xs.iter().any(|x| holds(doc, x)),
        Cond::Cmp(path, op, v) => {
            let found = reachable(doc, path);
            let equals = |target: &J| {
                if target.is_null() {
                    found.is_empty() || found.iter().any(|x| x.is_null())
                } else {
                    found.iter().any(|x| same(x, target))
                }
            };
            let ordered = |want: &[Ordering]| {
                found
                    .iter()
                    .any(|x| rank(x) == rank(v) && want.contains(&order(x, v)))
            };
            match op {
                Op::Eq => equals(v),
                Op::Ne => !equals(v),
                Op::Gt => ordered(&[Ordering::Greater]),
                Op::Gte => ordered(&[Ordering::Greater, Ordering::Equal]),
                Op::Lt => ordered(&[Ordering::Less]),
                Op::Lte => ordered(&[Ordering::Less, Ordering::Equal]),
                Op::In => v.as_array().expect("array").iter().any(equals),
                Op::Nin => !v.as_array().expect("array").iter().any(equals),
                Op::Exists => !found.is_empty() == truthy(v),
            }
        }
    }
}

fn sort_value(doc: &Doc, path: &str, asc: bool) -> J {
    let leaves = reachable(doc, path).into_iter().filter(|v| !v.is_array());
    let best = if asc {
        leaves.min_by(|a, b| order(a, b))
    } else {
        leaves.max_by(|a, b| order(a, b))
    };
    best.cloned().unwrap_or(J::Null)
}

/// Object-only descent, as used by `$unwind`.
fn lookup_strict<'a>(doc: &'a Doc, path: &str) -> Option<&'a J> {
    let mut segs = path.split('.');
    let mut cur = doc.get(segs.next()?)?;
    for s in segs {
        cur = cur.as_object()?.get(s)?;
    }
    Some(cur)
}

fn replace(doc: &mut Doc, path: &str, value: J) {
    let (head, rest) = match path.split_once('.') {
        Some((h, r)) => (h, Some(r)),
        None => (path, None),
    };
    match rest {
        None => {
            doc.insert(head.to_owned(), value);
        }
        Some(r) => {
            let slot = doc
                .get_mut(head)
                .and_then(J::as_object_mut)
                .expect("unwind walks objects");
            replace(slot, r, value);
        }
    }
}

/// Expression value of `$path`: arrays map over their elements, and
/// elements without the field are dropped.
fn field_value(doc: &Doc, path: &str) -> Option<J> {
    fn go(v: &J, segs: &[&str]) -> Option<J> {
        let Some((s, rest)) = segs.split_first() else {
            return Some(v.clone());
        };
        match v {
            J::Object(m) => go(m.get(*s)?, rest),
            J::Array(xs) => Some(J::Array(xs.iter().filter_map(|x| go(x, segs)).collect())),
            _ => None,
        }
    }
    let segs: Vec<&str> = path.split('.').collect();
    go(doc.get(segs[0])?, &segs[1..])
}

fn accumulate(acc: Acc, values: Vec<Option<J>>) -> J {
    let present: Vec<J> = values.iter().flatten().cloned().collect();
    match acc {
        Acc::Sum => {
            let nums: Vec<&J> = present.iter().filter(|v| v.is_number()).collect();
            if nums.iter().all(|v| v.is_i64()) {
                json!(nums.iter().map(|v| v.as_i64().expect("int")).sum::<i64>())
            } else {
                json!(nums.iter().map(|v| num(v)).sum::<f64>())
            }
        }
        Acc::Avg => {
            let nums: Vec<f64> = present.iter().filter(|v| v.is_number()).map(num).collect();
            if nums.is_empty() {
                J::Null
            } else {
                json!(nums.iter().sum::<f64>() / nums.len() as f64)
            }
        }
        Acc::Min => present
            .into_iter()
            .filter(|v| !v.is_null())
            .min_by(order)
            .unwrap_or(J::Null),
        Acc::Max => present
            .into_iter()
            .filter(|v| !v.is_null())
            .max_by(order)
            .unwrap_or(J::Null),
        Acc::First => values.into_iter().next().flatten().unwrap_or(J::Null),
        Acc::Last => values.into_iter().last().flatten().unwrap_or(J::Null),
        Acc::Push => J::Array(present),
    }
}

/// Output documents and whether their order is meaningful.
pub fn evaluate(docs: &[Doc], steps: &[Step]) -> (Vec<Doc>, bool) {
    let mut cur: Vec<Doc> = docs.to_vec();
    let mut ordered = false;
    for s in steps {
        cur = match s {
            Step::Match(c) => cur.into_iter().filter(|d| holds(d, c)).collect(),
            Step::Sort(keys) => {
                ordered = true;
                let mut tagged: Vec<(Vec<J>, Doc)> = cur
                    .into_iter()
                    .map(|d| {
                        (
                            keys.iter()
                                .map(|(p, asc)| sort_value(&d, p, *asc))
                                .collect(),
                            d,
                        )
                    })
                    .collect();
                tagged.sort_by(|(x, _), (y, _)| {
                    for ((a, b), (_, asc)) in x.iter().zip(y).zip(keys) {
                        let o = if *asc { order(a, b) } else { order(b, a) };
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                    Ordering::Equal
                });
                tagged.into_iter().map(|(_, d)| d).collect()
            }
            Step::Limit(n) => cur.into_iter().take(*n).collect(),
            Step::Unwind(p) => {
                let mut out = Vec::new();
                for d in cur {
                    if let Some(J::Array(xs)) = lookup_strict(&d, p) {
                        for x in xs.clone() {
                            let mut copy = d.clone();
                            replace(&mut copy, p, x);
                            out.push(copy);
                        }
                    }
                }
                out
            }
            Step::Group(key, accs) => {
                ordered = false;
                let mut groups: Vec<(J, Vec<Doc>)> = Vec::new();
                for d in cur {
                    let k = key
                        .as_ref()
                        .and_then(|k| field_value(&d, k))
                        .unwrap_or(J::Null);
                    match groups.iter_mut().find(|(g, _)| same(g, &k)) {
                        Some((_, members)) => members.push(d),
                        None => groups.push((k, vec![d])),
                    }
                }
                groups
                    .into_iter()
                    .map(|(k, members)| {
                        let mut out = Doc::new();
                        out.insert("_id".into(), k);
                        for (alias, acc, arg) in accs {
                            let values = members
                                .iter()
                                .map(|m| match arg {
                                    AccArg::One => Some(json!(1)),
                                    AccArg::Field(f) => field_value(m, f),
                                })
                                .collect();
                            out.insert(alias.clone(), accumulate(*acc, values));
                        }
                        out
                    })
                    .collect()
            }
        };
    }
    (cur, ordered)
}

// ---------------------------------------------------------------- generators

const WORDS: &[&str] = &["red", "blue", "green", "西", "Ärger"];

fn small_scalar<R: Rng>(rng: &mut R) -> J {
    match rng.gen_range(0..10) {
        0 => J::Null,
        1 => json!(rng.gen::<bool>()),
        2 | 3 => json!(rng.gen_range(0..4) as f64 + 0.5),
        4..=6 => json!(rng.gen_range(-2..5)),
        _ => json!(*WORDS.choose(rng).expect("words")),
    }
}

/// Documents with scalar, array, object and array-of-object fields, each
/// sometimes missing; nesting depth at most 2.
pub fn random_docs<R: Rng>(rng: &mut R) -> Vec<Doc> {
    let n = rng.gen_range(0..=20);
    (0..n)
        .map(|i| {
            let mut d = Doc::new();
            d.insert("_id".into(), json!(i));
            if rng.gen_bool(0.85) {
                d.insert("n".into(), small_scalar(rng));
            }
            if rng.gen_bool(0.85) {
                d.insert("s".into(), json!(*WORDS.choose(rng).expect("words")));
            }
            if rng.gen_bool(0.8) {
                let t: Vec<J> = (0..rng.gen_range(0..4))
                    .map(|_| small_scalar(rng))
                    .collect();
                d.insert(
                    "t".into(),
                    if rng.gen_bool(0.1) {
                        small_scalar(rng)
                    } else {
                        J::Array(t)
                    },
                );
            }
            if rng.gen_bool(0.8) {
                d.insert(
                    "o".into(),
                    json!({"x": rng.gen_range(0..5), "y": *WORDS.choose(rng).expect("words")}),
                );
            }
            if rng.gen_bool(0.8) {
                let items: Vec<J> = (0..rng.gen_range(0..4))
                    .map(|_| {
                        let mut m = Map::new();
                        if rng.gen_bool(0.85) {
                            m.insert("x".into(), small_scalar(rng));
                        }
                        m.insert("y".into(), json!(*WORDS.choose(rng).expect("words")));
                        J::Object(m)
                    })
                    .collect();
                d.insert("items".into(), J::Array(items));
            }
            d
        })
        .collect()
}

pub fn docs_json(collection: &str, docs: &[Doc]) -> String {
    json!({ collection: docs }).to_string()
}

const MATCH_PATHS: &[&str] = &["n", "s", "t", "o.x", "o.y", "items.x", "items.y", "missing"];
const SORT_PATHS: &[&str] = &["n", "s", "t", "o.x", "items.x", "_id"];
const GROUP_KEYS: &[&str] = &["s", "o.y", "n"];
const ACC_FIELDS: &[&str] = &["n", "o.x", "t", "items.x"];

pub fn random_cond<R: Rng>(rng: &mut R, depth: u32) -> Cond {
    if depth > 0 && rng.gen_bool(0.25) {
        let xs = (0..rng.gen_range(1..=2))
            .map(|_| random_cond(rng, depth - 1))
            .collect();
        return if rng.gen() {
            Cond::And(xs)
        } else {
            Cond::Or(xs)
        };
    }
    let path = (*MATCH_PATHS.choose(rng).expect("paths")).to_owned();
    let op = *Op::ALL.choose(rng).expect("ops");
    let value = match op {
        Op::In | Op::Nin => J::Array(
            (0..rng.gen_range(0..3))
                .map(|_| small_scalar(rng))
                .collect(),
        ),
        Op::Exists => json!(rng.gen::<bool>()),
        _ => small_scalar(rng),
    };
    Cond::Cmp(path, op, value)
}

pub fn random_step<R: Rng>(rng: &mut R) -> Step {
    match rng.gen_range(0..5) {
        0 => Step::Match(random_cond(rng, 1)),
        1 => {
            let mut paths = SORT_PATHS.to_vec();
            paths.shuffle(rng);
            let n = rng.gen_range(1..=2);
            Step::Sort(
                paths[..n]
                    .iter()
                    .map(|p| ((*p).to_owned(), rng.gen()))
                    .collect(),
            )
        }
        2 => Step::Limit(rng.gen_range(0..8)),
        3 => Step::Unwind(if rng.gen() { "t" } else { "items" }.to_owned()),
        _ => {
            let key = rng
                .gen_bool(0.8)
                .then(|| (*GROUP_KEYS.choose(rng).expect("keys")).to_owned());
            let accs = (0..rng.gen_range(0..=3))
                .map(|i| {
                    let acc = *Acc::ALL.choose(rng).expect("accs");
                    let arg = if rng.gen_bool(0.2) {
                        AccArg::One
                    } else {
                        AccArg::Field((*ACC_FIELDS.choose(rng).expect("fields")).to_owned())
                    };
                    (format!("a{i}"), acc, arg)
                })
                .collect();
            Step::Group(key, accs)
        }
    }
}

pub fn random_pipeline<R: Rng>(rng: &mut R, max_len: usize) -> Vec<Step> {
    (0..rng.gen_range(1..=max_len))
        .map(|_| random_step(rng))
        .collect()
}

/// Every dotted path the generators above can touch.
pub const FIELDS: &[&str] = &[
    "_id", "n", "s", "t", "o", "o.x", "o.y", "items", "items.x", "items.y", "missing",
];

const RENAME_STEMS: &[&str] = &["名", "поле", "champ", "フィールド", "Feld", "x"];

/// Injective rename of the collection `c` and every path in [`FIELDS`];
/// `_id` keeps its name.
pub fn random_map<R: Rng>(rng: &mut R) -> polynosql::schema::FieldTranslationMap {
    let mut segs: Vec<&str> = FIELDS
        .iter()
        .flat_map(|p| p.split('.'))
        .filter(|s| *s != "_id")
        .collect();
    segs.sort_unstable();
    segs.dedup();
    let mut numbers: Vec<usize> = (0..segs.len()).collect();
    numbers.shuffle(rng);
    let image = |seg: &str, rng: &mut R| -> String {
        if seg == "_id" {
            return seg.to_owned();
        }
        let i = segs.iter().position(|s| *s == seg).expect("known segment");
        format!(
            "{}{}",
            RENAME_STEMS[rng.gen_range(0..RENAME_STEMS.len())],
            numbers[i]
        )
    };
    let mut per_seg = std::collections::HashMap::new();
    for s in FIELDS.iter().flat_map(|p| p.split('.')) {
        if !per_seg.contains_key(s) {
            let img = image(s, rng);
            per_seg.insert(s, img);
        }
    }
    let fields = FIELDS
        .iter()
        .map(|p| {
            (
                (*p).to_owned(),
                p.split('.')
                    .map(|s| per_seg[s].as_str())
                    .collect::<Vec<_>>()
                    .join("."),
            )
        })
        .collect();
    polynosql::schema::FieldTranslationMap {
        db_id: "db".into(),
        target_language: None,
        collections: [("c".to_owned(), "集合".to_owned())].into_iter().collect(),
        fields: [("c".to_owned(), fields)].into_iter().collect(),
    }
}

pub fn database(docs: &[Doc]) -> polynosql::Database {
    polynosql::Database::from_json("db", &docs_json("c", docs)).expect("generated database loads")
}

/// Engine output as plain JSON documents.
pub fn as_json(rs: &polynosql::ResultSet) -> Vec<J> {
    rs.docs
        .iter()
        .map(|d| serde_json::to_value(d).expect("document serializes"))
        .collect()
}
