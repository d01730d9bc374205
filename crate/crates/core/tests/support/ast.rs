//! Random query ASTs in the shape the parser produces.

use polynosql::query::{
    Accumulator, AccumulatorOp, CmpOp, Comparison, Expr, FieldPath, Filter, FindQuery, Group,
    Lookup, Projection, ProjectionItem, ProjectionSource, Query, QueryBody, SortDirection, SortKey,
    Stage,
};
use polynosql::{Document, Value};
use rand::seq::SliceRandom;
use rand::Rng;

const SEGMENTS: &[&str] = &[
    "a",
    "b",
    "price",
    "name",
    "_id",
    "课程",
    "注册的日期",
    "名前",
    "データ",
    "город",
    "цена",
    "Straße",
    "café",
    "größe",
    "x_1",
    "null",
    "1st",
    "with space",
    "é",
    "ключ",
];
const COLLECTIONS: &[&str] = &[
    "c",
    "科目",
    "продукты",
    "Flüge",
    "チーム",
    "my coll",
    "getCollection",
    "x-y",
];
const STRINGS: &[&str] = &[
    "",
    "Spanish",
    "西班牙语",
    "2017-12-07 02:21:13",
    "quote \" inside",
    "back\\slash",
    "line\nbreak",
    "tab\t",
    "😀",
    "$notaref",
    "Ünïcödé",
];
const REGEXES: &[&str] = &[
    "^a",
    "b+$",
    "课程",
    "\\d{2}-\\d{2}",
    "(?i)spanish",
    "[а-я]+",
];
const ALIASES: &[&str] = &[
    "total",
    "count",
    "n",
    "合計",
    "moyenne",
    "всего",
    "avg_price",
    "名前",
];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty pool")
}

pub fn path<R: Rng>(rng: &mut R) -> FieldPath {
    let n = rng.gen_range(1..=3);
    let segs = (0..n).map(|_| pick(rng, SEGMENTS).to_owned()).collect();
    FieldPath::from_segments(segs).expect("pool segments are valid")
}

fn unique_paths<R: Rng>(rng: &mut R, n: usize) -> Vec<FieldPath> {
    let mut out: Vec<FieldPath> = Vec::new();
    while out.len() < n {
        let p = path(rng);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn scalar<R: Rng>(rng: &mut R) -> Value {
    match rng.gen_range(0..6) {
        0 => Value::Null,
        1 => Value::Bool(rng.gen()),
        2 => Value::Int(match rng.gen_range(0..4) {
            0 => i64::MIN,
            1 => i64::MAX,
            _ => rng.gen_range(-1000..1000),
        }),
        3 => Value::Float(match rng.gen_range(0..4) {
            0 => 1e21,
            1 => -0.5,
            2 => 1.0,
            _ => rng.gen_range(-1e6..1e6),
        }),
        _ => Value::String(pick(rng, STRINGS).to_owned()),
    }
}

fn literal<R: Rng>(rng: &mut R, depth: u32) -> Value {
    if depth == 0 || rng.gen_bool(0.7) {
        return scalar(rng);
    }
    if rng.gen_bool(0.5) {
        Value::Array(
            (0..rng.gen_range(0..3))
                .map(|_| literal(rng, depth - 1))
                .collect(),
        )
    } else {
        let mut d = Document::new();
        for _ in 0..rng.gen_range(0..3) {
            d.insert(pick(rng, SEGMENTS).to_owned(), literal(rng, depth - 1));
        }
        Value::Object(d)
    }
}

fn comparison<R: Rng>(rng: &mut R, p: &FieldPath, op: CmpOp) -> Comparison {
    let value = match op {
        CmpOp::In | CmpOp::Nin => {
            Value::Array((0..rng.gen_range(0..3)).map(|_| literal(rng, 1)).collect())
        }
        CmpOp::Regex => Value::String(pick(rng, REGEXES).to_owned()),
        _ => literal(rng, 2),
    };
    Comparison {
        path: p.clone(),
        op,
        value,
    }
}

/// A filter object body: one item stands alone, several form a conjunction.
pub fn filter<R: Rng>(rng: &mut R, depth: u32) -> Filter {
    let n = rng.gen_range(0..=3);
    let mut items: Vec<Filter> = (0..n).map(|_| filter_item(rng, depth)).collect();
    if items.len() == 1 {
        items.pop().expect("one item")
    } else {
        Filter::And(items)
    }
}

fn filter_item<R: Rng>(rng: &mut R, depth: u32) -> Filter {
    let logical = depth > 0 && rng.gen_bool(0.25);
    if logical {
        let list: Vec<Filter> = (0..rng.gen_range(1..=2))
            .map(|_| filter(rng, depth - 1))
            .collect();
        return match rng.gen_range(0..3) {
            0 => Filter::And(list),
            1 => Filter::Or(list),
            _ => Filter::Not(Box::new(Filter::Or(list))),
        };
    }
    let p = path(rng);
    if rng.gen_bool(0.15) {
        let mut ops = CmpOp::ALL.to_vec();
        ops.shuffle(rng);
        let k = rng.gen_range(1..=2);
        let mut cmps: Vec<Filter> = ops[..k]
            .iter()
            .map(|op| Filter::Cmp(comparison(rng, &p, *op)))
            .collect();
        let inner = if cmps.len() == 1 {
            cmps.pop().expect("one")
        } else {
            Filter::And(cmps)
        };
        return Filter::Not(Box::new(inner));
    }
    let op = *CmpOp::ALL.choose(rng).expect("ops");
    Filter::Cmp(comparison(rng, &p, op))
}

fn projection<R: Rng>(rng: &mut R, allow_empty: bool) -> Projection {
    let lo = if allow_empty { 0 } else { 1 };
    let n = rng.gen_range(lo..=3);
    let paths: Vec<FieldPath> = unique_paths(rng, n)
        .into_iter()
        .filter(|p| !p.is_id())
        .collect();
    let exclusion = rng.gen_bool(0.3);
    let mut items: Vec<ProjectionItem> = paths
        .into_iter()
        .map(|p| {
            let source = if exclusion {
                ProjectionSource::Exclude
            } else if rng.gen_bool(0.5) {
                ProjectionSource::Include
            } else {
                ProjectionSource::Ref(path(rng))
            };
            ProjectionItem { path: p, source }
        })
        .collect();
    if rng.gen_bool(0.4) || (items.is_empty() && !allow_empty) {
        let at = rng.gen_range(0..=items.len());
        items.insert(
            at,
            ProjectionItem {
                path: FieldPath::parse("_id").expect("id"),
                source: ProjectionSource::Exclude,
            },
        );
    }
    Projection(items)
}

fn sort<R: Rng>(rng: &mut R, allow_empty: bool) -> Vec<SortKey> {
    let lo = if allow_empty { 0 } else { 1 };
    let n = rng.gen_range(lo..=3);
    unique_paths(rng, n)
        .into_iter()
        .map(|p| SortKey {
            path: p,
            direction: if rng.gen() {
                SortDirection::Asc
            } else {
                SortDirection::Desc
            },
        })
        .collect()
}

fn expr<R: Rng>(rng: &mut R, depth: u32) -> Expr {
    match rng.gen_range(0..if depth == 0 { 2 } else { 4 }) {
        0 => Expr::Field(path(rng)),
        1 => Expr::Literal(match scalar(rng) {
            Value::String(s) if s.starts_with('$') => Value::String(s[1..].to_owned()),
            v => v,
        }),
        2 => Expr::Array(
            (0..rng.gen_range(0..3))
                .map(|_| expr(rng, depth - 1))
                .collect(),
        ),
        _ => {
            let mut keys: Vec<&str> = ALIASES.to_vec();
            keys.shuffle(rng);
            let n = rng.gen_range(0..3);
            Expr::Object(
                keys[..n]
                    .iter()
                    .map(|k| ((*k).to_owned(), expr(rng, depth - 1)))
                    .collect(),
            )
        }
    }
}

fn count<R: Rng>(rng: &mut R) -> u64 {
    if rng.gen_bool(0.1) {
        i64::MAX as u64
    } else {
        rng.gen_range(0..1000)
    }
}

fn stage<R: Rng>(rng: &mut R) -> Stage {
    match rng.gen_range(0..9) {
        0 => Stage::Match(filter(rng, 2)),
        1 => Stage::Project(projection(rng, false)),
        2 => {
            let mut aliases: Vec<&str> = ALIASES.to_vec();
            aliases.shuffle(rng);
            let n = rng.gen_range(0..=3);
            Stage::Group(Group {
                id: expr(rng, 1),
                accumulators: aliases[..n]
                    .iter()
                    .map(|a| Accumulator {
                        alias: (*a).to_owned(),
                        op: *AccumulatorOp::ALL.choose(rng).expect("ops"),
                        arg: expr(rng, 1),
                    })
                    .collect(),
            })
        }
        3 => Stage::Sort(sort(rng, false)),
        4 => Stage::Limit(count(rng)),
        5 => Stage::Skip(count(rng)),
        6 => Stage::Unwind(path(rng)),
        7 => Stage::Lookup(Lookup {
            from: pick(rng, COLLECTIONS).to_owned(),
            local_field: path(rng),
            foreign_field: path(rng),
            as_field: path(rng),
        }),
        _ => Stage::Count(pick(rng, ALIASES).to_owned()),
    }
}

pub fn query<R: Rng>(rng: &mut R) -> Query {
    let collection = pick(rng, COLLECTIONS).to_owned();
    let body = if rng.gen_bool(0.4) {
        QueryBody::Find(FindQuery {
            filter: filter(rng, 2),
            projection: rng.gen_bool(0.5).then(|| projection(rng, true)),
            sort: rng.gen_bool(0.5).then(|| sort(rng, true)),
            limit: rng.gen_bool(0.5).then(|| count(rng)),
        })
    } else {
        QueryBody::Aggregate((0..rng.gen_range(0..=5)).map(|_| stage(rng)).collect())
    };
    Query { collection, body }
}
