//! MongoDB-shell query model: AST, parser, canonical printer and the
//! structural extractors used by the evaluation metrics.

mod analysis;
mod parser;
mod printer;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

pub use analysis::{field_inventory, sketch_of, stage_signature, COLLECTION_PLACEHOLDER};
pub use parser::{parse, MAX_NESTING};
pub use printer::serialize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unsupported feature: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid field path `{0}`")]
pub struct InvalidPath(pub String);

/// A dotted field path. Segments are non-empty, contain no `.`, and do not
/// start with `$`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldPath(Vec<String>);

impl FieldPath {
    pub fn parse(dotted: &str) -> Result<Self, InvalidPath> {
        Self::from_segments(dotted.split('.').map(str::to_owned).collect())
            .map_err(|_| InvalidPath(dotted.to_owned()))
    }

    pub fn from_segments(segments: Vec<String>) -> Result<Self, InvalidPath> {
        let valid = !segments.is_empty()
            && segments
                .iter()
                .all(|s| !s.is_empty() && !s.contains('.') && !s.starts_with('$'));
        if valid {
            Ok(FieldPath(segments))
        } else {
            Err(InvalidPath(segments.join(".")))
        }
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn first(&self) -> &str {
        &self.0[0]
    }

    pub fn last(&self) -> &str {
        &self.0[self.0.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn join(&self, other: &FieldPath) -> FieldPath {
        let mut segs = self.0.clone();
        segs.extend(other.0.iter().cloned());
        FieldPath(segs)
    }

    /// The path with its first `n` segments removed, if any remain.
    pub fn tail(&self, n: usize) -> Option<FieldPath> {
        (n < self.0.len()).then(|| FieldPath(self.0[n..].to_vec()))
    }

    pub fn parent(&self) -> Option<FieldPath> {
        (self.0.len() > 1).then(|| FieldPath(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn starts_with(&self, prefix: &FieldPath) -> bool {
        self.0.starts_with(&prefix.0)
    }

    pub fn is_id(&self) -> bool {
        self.0.len() == 1 && self.0[0] == "_id"
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

impl Serialize for FieldPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FieldPath::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub collection: String,
    pub body: QueryBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryBody {
    Find(FindQuery),
    Aggregate(Vec<Stage>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FindQuery {
    pub filter: Filter,
    pub projection: Option<Projection>,
    pub sort: Option<Vec<SortKey>>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Match(Filter),
    Project(Projection),
    Group(Group),
    Sort(Vec<SortKey>),
    Limit(u64),
    Skip(u64),
    Unwind(FieldPath),
    Lookup(Lookup),
    Count(String),
}

impl Stage {
    pub fn keyword(&self) -> &'static str {
        match self {
            Stage::Match(_) => "match",
            Stage::Project(_) => "project",
            Stage::Group(_) => "group",
            Stage::Sort(_) => "sort",
            Stage::Limit(_) => "limit",
            Stage::Skip(_) => "skip",
            Stage::Unwind(_) => "unwind",
            Stage::Lookup(_) => "lookup",
            Stage::Count(_) => "count",
        }
    }
}

/// Filter tree. An empty `And` matches every document.
#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    And(Vec<Filter>),
    Or(Vec<Filter>),
    Not(Box<Filter>),
    Cmp(Comparison),
}

impl Default for Filter {
    fn default() -> Self {
        Filter::And(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub path: FieldPath,
    pub op: CmpOp,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Gt,
    Gte,
    Lt,
    Lte,
    In,
    Nin,
    Exists,
    Regex,
}

impl CmpOp {
    pub const ALL: [CmpOp; 10] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Gt,
        CmpOp::Gte,
        CmpOp::Lt,
        CmpOp::Lte,
        CmpOp::In,
        CmpOp::Nin,
        CmpOp::Exists,
        CmpOp::Regex,
    ];

    pub fn operator(self) -> &'static str {
        match self {
            CmpOp::Eq => "$eq",
            CmpOp::Ne => "$ne",
            CmpOp::Gt => "$gt",
            CmpOp::Gte => "$gte",
            CmpOp::Lt => "$lt",
            CmpOp::Lte => "$lte",
            CmpOp::In => "$in",
            CmpOp::Nin => "$nin",
            CmpOp::Exists => "$exists",
            CmpOp::Regex => "$regex",
        }
    }

    pub fn from_operator(op: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|c| c.operator() == op)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Projection(pub Vec<ProjectionItem>);

impl Projection {
    /// Inclusion mode: at least one entry includes or computes a field.
    pub fn is_inclusion(&self) -> bool {
        self.0
            .iter()
            .any(|i| !matches!(i.source, ProjectionSource::Exclude))
    }

    pub fn excludes_id(&self) -> bool {
        self.0
            .iter()
            .any(|i| i.path.is_id() && i.source == ProjectionSource::Exclude)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionItem {
    pub path: FieldPath,
    pub source: ProjectionSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionSource {
    Include,
    Exclude,
    Ref(FieldPath),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: Expr,
    pub accumulators: Vec<Accumulator>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub alias: String,
    pub op: AccumulatorOp,
    pub arg: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccumulatorOp {
    Sum,
    Avg,
    Min,
    Max,
    Push,
    AddToSet,
    First,
    Last,
}

impl AccumulatorOp {
    pub const ALL: [AccumulatorOp; 8] = [
        AccumulatorOp::Sum,
        AccumulatorOp::Avg,
        AccumulatorOp::Min,
        AccumulatorOp::Max,
        AccumulatorOp::Push,
        AccumulatorOp::AddToSet,
        AccumulatorOp::First,
        AccumulatorOp::Last,
    ];

    pub fn operator(self) -> &'static str {
        match self {
            AccumulatorOp::Sum => "$sum",
            AccumulatorOp::Avg => "$avg",
            AccumulatorOp::Min => "$min",
            AccumulatorOp::Max => "$max",
            AccumulatorOp::Push => "$push",
            AccumulatorOp::AddToSet => "$addToSet",
            AccumulatorOp::First => "$first",
            AccumulatorOp::Last => "$last",
        }
    }

    pub fn from_operator(op: &str) -> Option<AccumulatorOp> {
        AccumulatorOp::ALL.into_iter().find(|a| a.operator() == op)
    }
}

/// Aggregation expressions: field references, literals, and array/object
/// constructors over them.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Field(FieldPath),
    Literal(Value),
    Array(Vec<Expr>),
    Object(Vec<(String, Expr)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortDirection {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub path: FieldPath,
    pub direction: SortDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub from: String,
    pub local_field: FieldPath,
    pub foreign_field: FieldPath,
    pub as_field: FieldPath,
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

impl std::str::FromStr for Query {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// Where a field path occurs in a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathRole<'a> {
    /// Reads a field of the current document.
    Reference,
    /// Names an output field of `$project` or a find projection.
    ProjectionAlias,
    /// The `_id: 0` entry of a projection.
    IdSuppression,
    /// `foreignField` of a `$lookup`, resolved against collection `from`.
    ForeignField { from: &'a str },
    /// The `as` output field of a `$lookup`.
    LookupAs { from: &'a str },
}

/// Single-segment output names that are not field paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NameRole {
    GroupAlias,
    CountAlias,
    ExprKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueRole {
    Filter(CmpOp),
    ExprLiteral,
    AccumulatorArg(AccumulatorOp),
}

/// Hooks for a structure-preserving rewrite of a query. Callbacks fire in
/// textual order of the canonical form.
pub trait Rewriter {
    type Error;

    fn collection(&mut self, name: &str, primary: bool) -> Result<String, Self::Error> {
        let _ = primary;
        Ok(name.to_owned())
    }

    fn path(&mut self, path: &FieldPath, role: PathRole<'_>) -> Result<FieldPath, Self::Error> {
        let _ = role;
        Ok(path.clone())
    }

    fn name(&mut self, name: &str, role: NameRole) -> Result<String, Self::Error> {
        let _ = role;
        Ok(name.to_owned())
    }

    fn value(&mut self, value: &Value, role: ValueRole) -> Result<Value, Self::Error> {
        let _ = role;
        Ok(value.clone())
    }

    /// Called after each aggregation stage (or find clause) has been rewritten.
    fn end_stage(&mut self, original: &Stage) {
        let _ = original;
    }
}

pub fn rewrite<R: Rewriter>(q: &Query, r: &mut R) -> Result<Query, R::Error> {
    let collection = r.collection(&q.collection, true)?;
    let body = match &q.body {
        QueryBody::Find(f) => {
            let filter = rewrite_filter(&f.filter, r)?;
            r.end_stage(&Stage::Match(f.filter.clone()));
            let projection = match &f.projection {
                Some(p) => Some(rewrite_projection(p, r)?),
                None => None,
            };
            // find sorts the unprojected documents
            let sort = match &f.sort {
                Some(keys) => Some(rewrite_sort(keys, r)?),
                None => None,
            };
            if let Some(p) = &f.projection {
                r.end_stage(&Stage::Project(p.clone()));
            }
            QueryBody::Find(FindQuery {
                filter,
                projection,
                sort,
                limit: f.limit,
            })
        }
        QueryBody::Aggregate(stages) => {
            let mut out = Vec::with_capacity(stages.len());
            for stage in stages {
                out.push(rewrite_stage(stage, r)?);
                r.end_stage(stage);
            }
            QueryBody::Aggregate(out)
        }
    };
    Ok(Query { collection, body })
}

fn rewrite_stage<R: Rewriter>(stage: &Stage, r: &mut R) -> Result<Stage, R::Error> {
    Ok(match stage {
        Stage::Match(f) => Stage::Match(rewrite_filter(f, r)?),
        Stage::Project(p) => Stage::Project(rewrite_projection(p, r)?),
        Stage::Group(g) => {
            let id = rewrite_expr(&g.id, r)?;
            let mut accumulators = Vec::with_capacity(g.accumulators.len());
            for acc in &g.accumulators {
                let alias = r.name(&acc.alias, NameRole::GroupAlias)?;
                let arg = match &acc.arg {
                    Expr::Literal(v) => {
                        Expr::Literal(r.value(v, ValueRole::AccumulatorArg(acc.op))?)
                    }
                    other => rewrite_expr(other, r)?,
                };
                accumulators.push(Accumulator {
                    alias,
                    op: acc.op,
                    arg,
                });
            }
            Stage::Group(Group { id, accumulators })
        }
        Stage::Sort(keys) => Stage::Sort(rewrite_sort(keys, r)?),
        Stage::Limit(n) => Stage::Limit(*n),
        Stage::Skip(n) => Stage::Skip(*n),
        Stage::Unwind(p) => Stage::Unwind(r.path(p, PathRole::Reference)?),
        Stage::Lookup(l) => {
            let from = r.collection(&l.from, false)?;
            let local_field = r.path(&l.local_field, PathRole::Reference)?;
            let foreign_field =
                r.path(&l.foreign_field, PathRole::ForeignField { from: &l.from })?;
            let as_field = r.path(&l.as_field, PathRole::LookupAs { from: &l.from })?;
            Stage::Lookup(Lookup {
                from,
                local_field,
                foreign_field,
                as_field,
            })
        }
        Stage::Count(alias) => Stage::Count(r.name(alias, NameRole::CountAlias)?),
    })
}

fn rewrite_filter<R: Rewriter>(f: &Filter, r: &mut R) -> Result<Filter, R::Error> {
    Ok(match f {
        Filter::And(xs) => Filter::And(
            xs.iter()
                .map(|x| rewrite_filter(x, r))
                .collect::<Result<_, _>>()?,
        ),
        Filter::Or(xs) => Filter::Or(
            xs.iter()
                .map(|x| rewrite_filter(x, r))
                .collect::<Result<_, _>>()?,
        ),
        Filter::Not(x) => Filter::Not(Box::new(rewrite_filter(x, r)?)),
        Filter::Cmp(c) => {
            let path = r.path(&c.path, PathRole::Reference)?;
            let value = match (&c.op, &c.value) {
                (CmpOp::In | CmpOp::Nin, Value::Array(items)) => Value::Array(
                    items
                        .iter()
                        .map(|v| r.value(v, ValueRole::Filter(c.op)))
                        .collect::<Result<_, _>>()?,
                ),
                _ => r.value(&c.value, ValueRole::Filter(c.op))?,
            };
            Filter::Cmp(Comparison {
                path,
                op: c.op,
                value,
            })
        }
    })
}

fn rewrite_projection<R: Rewriter>(p: &Projection, r: &mut R) -> Result<Projection, R::Error> {
    let mut items = Vec::with_capacity(p.0.len());
    for item in &p.0 {
        let role = match item.source {
            ProjectionSource::Exclude if item.path.is_id() => PathRole::IdSuppression,
            ProjectionSource::Ref(_) => PathRole::ProjectionAlias,
            _ => PathRole::Reference,
        };
        let path = r.path(&item.path, role)?;
        let source = match &item.source {
            ProjectionSource::Ref(src) => ProjectionSource::Ref(r.path(src, PathRole::Reference)?),
            other => other.clone(),
        };
        items.push(ProjectionItem { path, source });
    }
    Ok(Projection(items))
}

fn rewrite_sort<R: Rewriter>(keys: &[SortKey], r: &mut R) -> Result<Vec<SortKey>, R::Error> {
    keys.iter()
        .map(|k| {
            Ok(SortKey {
                path: r.path(&k.path, PathRole::Reference)?,
                direction: k.direction,
            })
        })
        .collect()
}

fn rewrite_expr<R: Rewriter>(e: &Expr, r: &mut R) -> Result<Expr, R::Error> {
    Ok(match e {
        Expr::Field(p) => Expr::Field(r.path(p, PathRole::Reference)?),
        Expr::Literal(v) => Expr::Literal(r.value(v, ValueRole::ExprLiteral)?),
        Expr::Array(xs) => Expr::Array(
            xs.iter()
                .map(|x| rewrite_expr(x, r))
                .collect::<Result<_, _>>()?,
        ),
        Expr::Object(entries) => {
            let mut out = Vec::with_capacity(entries.len());
            for (k, v) in entries {
                let key = r.name(k, NameRole::ExprKey)?;
                out.push((key, rewrite_expr(v, r)?));
            }
            Expr::Object(out)
        }
    })
}
