//! Recursive-descent parser for `db.<coll>.find(...)` / `db.<coll>.aggregate([...])`.
//!
//! Parsing runs in two passes: the statement text is read into a loose
//! JSON-like node tree (bare keys, single quotes, comments allowed), then the
//! tree is checked against the supported operator set and lowered to the AST.

use regex::Regex;

use super::{
    Accumulator, AccumulatorOp, CmpOp, Comparison, Expr, FieldPath, Filter, FindQuery, Group,
    Lookup, Projection, ProjectionItem, ProjectionSource, Query, QueryBody, QueryError,
    SortDirection, SortKey, Stage,
};
use crate::value::{Document, Value};

/// Maximum bracket nesting accepted before giving up.
pub const MAX_NESTING: usize = 96;

type Result<T> = std::result::Result<T, QueryError>;

fn err<T>(position: usize, message: impl Into<String>) -> Result<T> {
    Err(QueryError::Parse {
        position,
        message: message.into(),
    })
}

fn unsupported<T>(feature: impl Into<String>) -> Result<T> {
    Err(QueryError::Unsupported(feature.into()))
}

const UNSUPPORTED_STAGES: &[&str] = &[
    "$addFields",
    "$set",
    "$unset",
    "$facet",
    "$bucket",
    "$bucketAuto",
    "$replaceRoot",
    "$replaceWith",
    "$out",
    "$merge",
    "$sample",
    "$redact",
    "$geoNear",
    "$graphLookup",
    "$sortByCount",
    "$unionWith",
    "$densify",
    "$fill",
    "$setWindowFields",
    "$search",
    "$indexStats",
    "$collStats",
    "$documents",
];

const UNSUPPORTED_METHODS: &[&str] = &[
    "findOne",
    "count",
    "countDocuments",
    "estimatedDocumentCount",
    "distinct",
    "insert",
    "insertOne",
    "insertMany",
    "update",
    "updateOne",
    "updateMany",
    "deleteOne",
    "deleteMany",
    "remove",
    "replaceOne",
    "mapReduce",
    "drop",
    "createIndex",
    "bulkWrite",
    "findOneAndUpdate",
    "watch",
];

#[derive(Debug, Clone)]
struct Node {
    pos: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Object(Vec<(String, usize, Node)>),
    Array(Vec<Node>),
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
}

impl Kind {
    fn describe(&self) -> &'static str {
        match self {
            Kind::Object(_) => "object",
            Kind::Array(_) => "array",
            Kind::Str(_) => "string",
            Kind::Int(_) | Kind::Float(_) => "number",
            Kind::Bool(_) => "boolean",
            Kind::Null => "null",
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    depth: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            depth: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) -> Result<()> {
        loop {
            let rest = &self.src[self.pos..];
            if let Some(c) = rest.chars().next().filter(|c| c.is_whitespace()) {
                self.pos += c.len_utf8();
            } else if rest.starts_with("//") {
                self.pos += rest.find('\n').unwrap_or(rest.len());
            } else if let Some(body) = rest.strip_prefix("/*") {
                match body.find("*/") {
                    Some(end) => self.pos += end + 4,
                    None => return err(self.pos, "unterminated comment"),
                }
            } else {
                return Ok(());
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        self.skip_ws()?;
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(c) => err(self.pos, format!("expected `{want}`, found `{c}`")),
            None => err(self.pos, format!("expected `{want}`, found end of input")),
        }
    }

    fn eat(&mut self, want: char) -> Result<bool> {
        self.skip_ws()?;
        if self.peek() == Some(want) {
            self.pos += want.len_utf8();
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn ident(&mut self) -> Result<(usize, String)> {
        self.skip_ws()?;
        let start = self.pos;
        match self.peek() {
            Some(c) if is_ident_start(c) => {
                self.bump();
            }
            Some(c) => return err(start, format!("expected identifier, found `{c}`")),
            None => return err(start, "expected identifier, found end of input"),
        }
        while self.peek().is_some_and(is_ident_continue) {
            self.bump();
        }
        Ok((start, self.src[start..self.pos].to_owned()))
    }

    fn string(&mut self) -> Result<String> {
        let start = self.pos;
        let quote = self.bump().expect("caller checked quote");
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return err(start, "unterminated string literal");
            };
            match c {
                c if c == quote => return Ok(out),
                '\\' => {
                    let esc_pos = self.pos;
                    match self.bump() {
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some('r') => out.push('\r'),
                        Some('b') => out.push('\u{8}'),
                        Some('f') => out.push('\u{c}'),
                        Some('0') => out.push('\0'),
                        Some('u') => out.push(self.unicode_escape(esc_pos)?),
                        Some(c @ ('"' | '\'' | '\\' | '/')) => out.push(c),
                        Some(c) => return err(esc_pos, format!("invalid escape `\\{c}`")),
                        None => return err(start, "unterminated string literal"),
                    }
                }
                '\n' => return err(self.pos - 1, "newline in string literal"),
                c => out.push(c),
            }
        }
    }

    fn hex4(&mut self, at: usize) -> Result<u32> {
        let digits = self
            .src
            .get(self.pos..self.pos + 4)
            .filter(|d| d.chars().all(|c| c.is_ascii_hexdigit()));
        match digits {
            Some(d) => {
                self.pos += 4;
                Ok(u32::from_str_radix(d, 16).expect("hex digits"))
            }
            None => err(at, "invalid \\u escape"),
        }
    }

    fn unicode_escape(&mut self, at: usize) -> Result<char> {
        let hi = self.hex4(at)?;
        let code = if (0xD800..0xDC00).contains(&hi) {
            if !self.src[self.pos..].starts_with("\\u") {
                return err(at, "unpaired surrogate in \\u escape");
            }
            self.pos += 2;
            let lo = self.hex4(at)?;
            if !(0xDC00..0xE000).contains(&lo) {
                return err(at, "invalid low surrogate in \\u escape");
            }
            0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00)
        } else {
            hi
        };
        char::from_u32(code).map_or_else(|| err(at, "invalid \\u escape"), Ok)
    }

    fn number(&mut self) -> Result<Kind> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.bump();
        }
        let digits_start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == digits_start {
            return err(start, "expected digits");
        }
        let mut is_float = false;
        if self.peek() == Some('.')
            && self.src[self.pos + 1..].starts_with(|c: char| c.is_ascii_digit())
        {
            is_float = true;
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                is_float = true;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
            } else {
                self.pos = save;
            }
        }
        if self.peek().is_some_and(is_ident_continue) {
            return err(self.pos, "malformed number");
        }
        let text = &self.src[start..self.pos];
        if !is_float {
            if let Ok(i) = text.parse::<i64>() {
                return Ok(Kind::Int(i));
            }
        }
        match text.parse::<f64>() {
            Ok(f) if f.is_finite() => Ok(Kind::Float(f)),
            _ => err(start, format!("number out of range: {text}")),
        }
    }

    fn value(&mut self) -> Result<Node> {
        self.skip_ws()?;
        let pos = self.pos;
        let Some(c) = self.peek() else {
            return err(pos, "expected a value, found end of input");
        };
        let kind = match c {
            '{' => {
                self.enter(pos)?;
                let kind = self.object_body()?;
                self.depth -= 1;
                kind
            }
            '[' => {
                self.enter(pos)?;
                let kind = self.array_body()?;
                self.depth -= 1;
                kind
            }
            '"' | '\'' => Kind::Str(self.string()?),
            '-' | '0'..='9' => self.number()?,
            '/' => return unsupported("regular expression literal"),
            c if is_ident_start(c) => {
                let (_, word) = self.ident()?;
                match word.as_str() {
                    "true" => Kind::Bool(true),
                    "false" => Kind::Bool(false),
                    "null" => Kind::Null,
                    "new" | "ISODate" | "Date" | "ObjectId" | "NumberInt" | "NumberLong"
                    | "NumberDecimal" | "Timestamp" | "UUID" | "BinData" | "RegExp" => {
                        return unsupported(word)
                    }
                    "undefined" | "NaN" | "Infinity" => return unsupported(word),
                    _ => return err(pos, format!("unexpected identifier `{word}`")),
                }
            }
            c => return err(pos, format!("unexpected character `{c}`")),
        };
        Ok(Node { pos, kind })
    }

    fn enter(&mut self, pos: usize) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return err(pos, "nesting too deep");
        }
        Ok(())
    }

    fn object_body(&mut self) -> Result<Kind> {
        self.expect('{')?;
        let mut entries: Vec<(String, usize, Node)> = Vec::new();
        loop {
            self.skip_ws()?;
            if self.eat('}')? {
                break;
            }
            let key_pos = self.pos;
            let key = match self.peek() {
                Some('"' | '\'') => self.string()?,
                Some(c) if is_ident_start(c) => self.ident()?.1,
                Some(c) if c.is_ascii_digit() => {
                    let start = self.pos;
                    while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.bump();
                    }
                    self.src[start..self.pos].to_owned()
                }
                Some(c) => return err(key_pos, format!("expected object key, found `{c}`")),
                None => return err(key_pos, "unterminated object"),
            };
            if entries.iter().any(|(k, _, _)| *k == key) {
                return err(key_pos, format!("duplicate key `{key}`"));
            }
            self.expect(':')?;
            let value = self.value()?;
            entries.push((key, key_pos, value));
            if !self.eat(',')? {
                self.expect('}')?;
                break;
            }
        }
        Ok(Kind::Object(entries))
    }

    fn array_body(&mut self) -> Result<Kind> {
        self.expect('[')?;
        let mut items = Vec::new();
        loop {
            if self.eat(']')? {
                break;
            }
            items.push(self.value()?);
            if !self.eat(',')? {
                self.expect(']')?;
                break;
            }
        }
        Ok(Kind::Array(items))
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Parses a single MongoDB shell statement.
pub fn parse(text: &str) -> Result<Query> {
    let mut lx = Lexer::new(text);
    let (pos, db) = lx.ident()?;
    if db != "db" {
        return err(pos, format!("statement must start with `db`, found `{db}`"));
    }
    let collection = collection_name(&mut lx)?;
    lx.expect('.')?;
    let (method_pos, method) = lx.ident()?;
    let body = match method.as_str() {
        "find" => QueryBody::Find(find_body(&mut lx)?),
        "aggregate" => QueryBody::Aggregate(aggregate_body(&mut lx)?),
        m if UNSUPPORTED_METHODS.contains(&m) => return unsupported(m),
        m => return err(method_pos, format!("unknown method `{m}`")),
    };
    lx.eat(';')?;
    lx.skip_ws()?;
    if lx.pos != text.len() {
        return err(lx.pos, "unexpected trailing input");
    }
    Ok(Query { collection, body })
}

fn collection_name(lx: &mut Lexer) -> Result<String> {
    lx.skip_ws()?;
    if lx.eat('[')? {
        let name = quoted_string(lx)?;
        lx.expect(']')?;
        return Ok(name);
    }
    lx.expect('.')?;
    let (pos, name) = lx.ident()?;
    if name == "getCollection" {
        lx.expect('(')?;
        let name = quoted_string(lx)?;
        lx.expect(')')?;
        if name.is_empty() {
            return err(pos, "empty collection name");
        }
        return Ok(name);
    }
    Ok(name)
}

fn quoted_string(lx: &mut Lexer) -> Result<String> {
    lx.skip_ws()?;
    match lx.peek() {
        Some('"' | '\'') => lx.string(),
        _ => err(lx.pos, "expected a string literal"),
    }
}

fn find_body(lx: &mut Lexer) -> Result<FindQuery> {
    lx.expect('(')?;
    let mut find = FindQuery::default();
    if !lx.eat(')')? {
        let filter = lx.value()?;
        find.filter = filter_object(&filter)?;
        if lx.eat(',')? {
            let proj = lx.value()?;
            find.projection = Some(projection(&proj, false)?);
            if lx.eat(',')? {
                return unsupported("find options argument");
            }
        }
        lx.expect(')')?;
    }
    loop {
        lx.skip_ws()?;
        if !lx.src[lx.pos..].starts_with('.') {
            break;
        }
        lx.expect('.')?;
        let (pos, method) = lx.ident()?;
        lx.expect('(')?;
        match method.as_str() {
            "sort" => {
                if find.sort.is_some() {
                    return err(pos, "duplicate sort()");
                }
                let node = lx.value()?;
                find.sort = Some(sort_keys(&node, true)?);
            }
            "limit" => {
                if find.limit.is_some() {
                    return err(pos, "duplicate limit()");
                }
                let node = lx.value()?;
                find.limit = Some(count_arg(&node, "limit")?);
            }
            m @ ("skip" | "count" | "pretty" | "toArray" | "hint" | "collation" | "batchSize"
            | "projection") => return unsupported(format!("cursor method {m}()")),
            m => return err(pos, format!("unknown cursor method `{m}`")),
        }
        lx.expect(')')?;
    }
    Ok(find)
}

fn aggregate_body(lx: &mut Lexer) -> Result<Vec<Stage>> {
    lx.expect('(')?;
    let node = lx.value()?;
    let Kind::Array(items) = &node.kind else {
        return err(node.pos, "aggregate() expects an array of stages");
    };
    let stages = items.iter().map(stage).collect::<Result<Vec<_>>>()?;
    if lx.eat(',')? {
        return unsupported("aggregate options argument");
    }
    lx.expect(')')?;
    Ok(stages)
}

fn entries<'a>(node: &'a Node, what: &str) -> Result<&'a [(String, usize, Node)]> {
    match &node.kind {
        Kind::Object(e) => Ok(e),
        other => err(
            node.pos,
            format!("{what} must be an object, found {}", other.describe()),
        ),
    }
}

fn path_at(key: &str, pos: usize) -> Result<FieldPath> {
    FieldPath::parse(key).or_else(|_| err(pos, format!("invalid field path `{key}`")))
}

fn stage(node: &Node) -> Result<Stage> {
    let e = entries(node, "pipeline stage")?;
    let [(name, pos, body)] = e else {
        return err(node.pos, "a pipeline stage must have exactly one key");
    };
    match name.as_str() {
        "$match" => Ok(Stage::Match(filter_object(body)?)),
        "$project" => {
            let p = projection(body, true)?;
            Ok(Stage::Project(p))
        }
        "$group" => group(body).map(Stage::Group),
        "$sort" => Ok(Stage::Sort(sort_keys(body, false)?)),
        "$limit" => Ok(Stage::Limit(count_arg(body, "$limit")?)),
        "$skip" => Ok(Stage::Skip(count_arg(body, "$skip")?)),
        "$unwind" => unwind(body).map(Stage::Unwind),
        "$lookup" => lookup(body).map(Stage::Lookup),
        "$count" => match &body.kind {
            Kind::Str(s) if !s.is_empty() && !s.starts_with('$') && !s.contains('.') => {
                Ok(Stage::Count(s.clone()))
            }
            _ => err(body.pos, "$count expects a non-empty field name"),
        },
        s if UNSUPPORTED_STAGES.contains(&s) => unsupported(s),
        s if s.starts_with('$') => unsupported(s),
        s => err(*pos, format!("unknown stage `{s}`")),
    }
}

fn count_arg(node: &Node, what: &str) -> Result<u64> {
    match node.kind {
        Kind::Int(i) if i >= 0 => Ok(i as u64),
        Kind::Float(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
        _ => err(node.pos, format!("{what} expects a non-negative integer")),
    }
}

fn sort_keys(node: &Node, allow_empty: bool) -> Result<Vec<SortKey>> {
    let e = entries(node, "sort specification")?;
    if e.is_empty() && !allow_empty {
        return err(node.pos, "$sort requires at least one key");
    }
    e.iter()
        .map(|(key, pos, dir)| {
            let path = path_at(key, *pos)?;
            let direction = match dir.kind {
                Kind::Int(1) => SortDirection::Asc,
                Kind::Int(-1) => SortDirection::Desc,
                Kind::Float(1.0) => SortDirection::Asc,
                Kind::Float(-1.0) => SortDirection::Desc,
                Kind::Object(_) => return unsupported("$meta sort"),
                _ => return err(dir.pos, "sort direction must be 1 or -1"),
            };
            Ok(SortKey { path, direction })
        })
        .collect()
}

fn unwind(node: &Node) -> Result<FieldPath> {
    match &node.kind {
        Kind::Str(s) => field_ref(s, node.pos),
        Kind::Object(e) => {
            let mut path = None;
            for (k, pos, v) in e {
                match k.as_str() {
                    "path" => match &v.kind {
                        Kind::Str(s) => path = Some(field_ref(s, v.pos)?),
                        _ => return err(v.pos, "$unwind path must be a string"),
                    },
                    "includeArrayIndex" | "preserveNullAndEmptyArrays" => {
                        return unsupported(format!("$unwind {k}"))
                    }
                    _ => return err(*pos, format!("unknown $unwind option `{k}`")),
                }
            }
            path.map_or_else(|| err(node.pos, "$unwind requires a path"), Ok)
        }
        _ => err(node.pos, "$unwind expects a `$field` string"),
    }
}

/// `"$a.b"` -> `a.b`
fn field_ref(s: &str, pos: usize) -> Result<FieldPath> {
    if s.starts_with("$$") {
        return unsupported("$$ variables");
    }
    match s.strip_prefix('$') {
        Some(rest) => path_at(rest, pos),
        None => err(pos, format!("expected a `$field` reference, found \"{s}\"")),
    }
}

fn lookup(node: &Node) -> Result<Lookup> {
    let e = entries(node, "$lookup")?;
    let (mut from, mut local, mut foreign, mut as_field) = (None, None, None, None);
    for (k, pos, v) in e {
        let text = || match &v.kind {
            Kind::Str(s) if !s.is_empty() => Ok(s.as_str()),
            _ => err(v.pos, format!("$lookup `{k}` must be a non-empty string")),
        };
        match k.as_str() {
            "from" => from = Some(text()?.to_owned()),
            "localField" => local = Some(path_at(text()?, v.pos)?),
            "foreignField" => foreign = Some(path_at(text()?, v.pos)?),
            "as" => as_field = Some(path_at(text()?, v.pos)?),
            "pipeline" | "let" => return unsupported(format!("$lookup {k}")),
            _ => return err(*pos, format!("unknown $lookup option `{k}`")),
        }
    }
    match (from, local, foreign, as_field) {
        (Some(from), Some(local_field), Some(foreign_field), Some(as_field)) => Ok(Lookup {
            from,
            local_field,
            foreign_field,
            as_field,
        }),
        _ => err(
            node.pos,
            "$lookup requires from, localField, foreignField and as",
        ),
    }
}

fn group(node: &Node) -> Result<Group> {
    let e = entries(node, "$group")?;
    let mut id = None;
    let mut accumulators = Vec::new();
    for (k, pos, v) in e {
        if k == "_id" {
            id = Some(expr(v)?);
            continue;
        }
        if k.starts_with('$') || k.contains('.') {
            return err(*pos, format!("invalid $group output field `{k}`"));
        }
        let spec = entries(v, "accumulator")?;
        let [(op_name, op_pos, arg)] = spec else {
            return err(v.pos, "an accumulator must have exactly one operator");
        };
        let op = match AccumulatorOp::from_operator(op_name) {
            Some(op) => op,
            None if op_name.starts_with('$') => {
                return unsupported(format!("accumulator {op_name}"))
            }
            None => {
                return err(
                    *op_pos,
                    format!("expected an accumulator operator, found `{op_name}`"),
                )
            }
        };
        accumulators.push(Accumulator {
            alias: k.clone(),
            op,
            arg: expr(arg)?,
        });
    }
    match id {
        Some(id) => Ok(Group { id, accumulators }),
        None => err(node.pos, "$group requires an _id"),
    }
}

fn expr(node: &Node) -> Result<Expr> {
    Ok(match &node.kind {
        Kind::Str(s) if s.starts_with('$') => Expr::Field(field_ref(s, node.pos)?),
        Kind::Object(e) => {
            if let Some((k, _, _)) = e.iter().find(|(k, _, _)| k.starts_with('$')) {
                return unsupported(format!("expression operator {k}"));
            }
            let mut out = Vec::with_capacity(e.len());
            for (k, pos, v) in e {
                if k.contains('.') {
                    return err(*pos, format!("expression object key `{k}` contains `.`"));
                }
                out.push((k.clone(), expr(v)?));
            }
            Expr::Object(out)
        }
        Kind::Array(items) => Expr::Array(items.iter().map(expr).collect::<Result<_>>()?),
        _ => Expr::Literal(literal(node)),
    })
}

fn projection(node: &Node, stage: bool) -> Result<Projection> {
    let e = entries(node, "projection")?;
    if stage && e.is_empty() {
        return err(node.pos, "$project requires at least one field");
    }
    let mut items = Vec::with_capacity(e.len());
    for (k, pos, v) in e {
        let path = path_at(k, *pos)?;
        let source = match &v.kind {
            Kind::Int(i) => flag(*i != 0),
            Kind::Float(f) => flag(*f != 0.0),
            Kind::Bool(b) => flag(*b),
            Kind::Str(s) if s.starts_with('$') => ProjectionSource::Ref(field_ref(s, v.pos)?),
            Kind::Object(inner) => match inner.first() {
                Some((op, _, _)) if op.starts_with('$') => {
                    return unsupported(format!("projection operator {op}"))
                }
                _ => return unsupported("nested projection object"),
            },
            _ => return unsupported("projection literal"),
        };
        items.push(ProjectionItem { path, source });
    }
    let includes = items.iter().any(|i| i.source != ProjectionSource::Exclude);
    let excludes = items
        .iter()
        .any(|i| i.source == ProjectionSource::Exclude && !i.path.is_id());
    if includes && excludes {
        return err(
            node.pos,
            "cannot mix inclusion and exclusion in a projection",
        );
    }
    Ok(Projection(items))
}

fn flag(include: bool) -> ProjectionSource {
    if include {
        ProjectionSource::Include
    } else {
        ProjectionSource::Exclude
    }
}

fn filter_object(node: &Node) -> Result<Filter> {
    let e = entries(node, "filter")?;
    let mut items = Vec::new();
    for (k, pos, v) in e {
        match k.as_str() {
            "$and" => items.push(Filter::And(filter_list(v, k)?)),
            "$or" => items.push(Filter::Or(filter_list(v, k)?)),
            "$nor" => items.push(Filter::Not(Box::new(Filter::Or(filter_list(v, k)?)))),
            op if op.starts_with('$') => return unsupported(format!("query operator {op}")),
            key => {
                let path = path_at(key, *pos)?;
                items.extend(path_condition(&path, v)?);
            }
        }
    }
    Ok(if items.len() == 1 {
        items.pop().expect("one item")
    } else {
        Filter::And(items)
    })
}

fn filter_list(node: &Node, op: &str) -> Result<Vec<Filter>> {
    match &node.kind {
        Kind::Array(items) if !items.is_empty() => items.iter().map(filter_object).collect(),
        _ => err(node.pos, format!("{op} expects a non-empty array")),
    }
}

fn is_operator_object(node: &Node) -> Result<bool> {
    let Kind::Object(e) = &node.kind else {
        return Ok(false);
    };
    let ops = e.iter().filter(|(k, _, _)| k.starts_with('$')).count();
    if ops > 0 && ops < e.len() {
        return err(node.pos, "cannot mix operators and field names");
    }
    Ok(ops > 0)
}

fn path_condition(path: &FieldPath, node: &Node) -> Result<Vec<Filter>> {
    if !is_operator_object(node)? {
        return Ok(vec![Filter::Cmp(Comparison {
            path: path.clone(),
            op: CmpOp::Eq,
            value: literal(node),
        })]);
    }
    let Kind::Object(e) = &node.kind else {
        unreachable!()
    };
    let mut out = Vec::with_capacity(e.len());
    for (op_name, pos, arg) in e {
        if op_name == "$not" {
            if !is_operator_object(arg)? {
                return err(arg.pos, "$not expects an operator object");
            }
            let mut inner = path_condition(path, arg)?;
            if inner.iter().any(|f| matches!(f, Filter::Not(_))) {
                return err(arg.pos, "nested $not");
            }
            let inner = if inner.len() == 1 {
                inner.pop().expect("one")
            } else {
                Filter::And(inner)
            };
            out.push(Filter::Not(Box::new(inner)));
            continue;
        }
        let Some(op) = CmpOp::from_operator(op_name) else {
            return match op_name.as_str() {
                "$options" => unsupported("$regex options"),
                _ if op_name.starts_with('$') => unsupported(format!("query operator {op_name}")),
                _ => err(*pos, format!("unknown operator `{op_name}`")),
            };
        };
        let value = literal(arg);
        match op {
            CmpOp::In | CmpOp::Nin if !matches!(value, Value::Array(_)) => {
                return err(arg.pos, format!("{op_name} expects an array"));
            }
            CmpOp::Regex => {
                let Value::String(pattern) = &value else {
                    return err(arg.pos, "$regex expects a string pattern");
                };
                if let Err(e) = Regex::new(pattern) {
                    return err(arg.pos, format!("invalid regular expression: {e}"));
                }
            }
            _ => {}
        }
        out.push(Filter::Cmp(Comparison {
            path: path.clone(),
            op,
            value,
        }));
    }
    Ok(out)
}

fn literal(node: &Node) -> Value {
    match &node.kind {
        Kind::Object(e) => {
            let mut doc = Document::with_capacity(e.len());
            for (k, _, v) in e {
                doc.insert(k.clone(), literal(v));
            }
            Value::Object(doc)
        }
        Kind::Array(items) => Value::Array(items.iter().map(literal).collect()),
        Kind::Str(s) => Value::String(s.clone()),
        Kind::Int(i) => Value::Int(*i),
        Kind::Float(f) => Value::Float(*f),
        Kind::Bool(b) => Value::Bool(*b),
        Kind::Null => Value::Null,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(text: &str) -> QueryError {
        parse(text).expect_err(text)
    }

    #[test]
    fn empty_find() {
        let q = parse("db.c.find({})").unwrap();
        assert_eq!(q.collection, "c");
        assert_eq!(q.body, QueryBody::Find(FindQuery::default()));
        assert_eq!(parse("db.c.find()").unwrap(), q);
    }

    #[test]
    fn find_chain() {
        let q = parse("db.c.find({a:1},{b:1}).sort({b:-1}).limit(3);").unwrap();
        let QueryBody::Find(f) = q.body else { panic!() };
        assert_eq!(f.limit, Some(3));
        assert_eq!(f.sort.unwrap()[0].direction, SortDirection::Desc);
        assert_eq!(f.projection.unwrap().0.len(), 1);
        // chained order does not matter
        assert!(parse("db.c.find({a:1}).limit(3).sort({b:-1})").is_ok());
    }

    #[test]
    fn numeric_kinds_preserved() {
        let q = parse("db.c.find({a: 1, b: 1.0, c: -2.5e3, d: 1e2})").unwrap();
        let QueryBody::Find(f) = q.body else { panic!() };
        let Filter::And(items) = f.filter else {
            panic!()
        };
        let vals: Vec<_> = items
            .iter()
            .map(|i| match i {
                Filter::Cmp(c) => c.value.kind_name(),
                _ => panic!(),
            })
            .collect();
        assert_eq!(vals, ["int", "float", "float", "float"]);
    }

    #[test]
    fn unicode_identifiers_and_quotes() {
        let q = parse("db.科目.find({名前: 'Ünïcödé', \"курс.имя\": \"x\"})").unwrap();
        assert_eq!(q.collection, "科目");
        let q = parse("db.getCollection('my coll').find({})").unwrap();
        assert_eq!(q.collection, "my coll");
        let q = parse("db[\"a-b\"].find({})").unwrap();
        assert_eq!(q.collection, "a-b");
    }

    #[test]
    fn comments_are_skipped() {
        let q =
            parse("// top\ndb.c.aggregate([ /* first */ {$match: {a: 1}}, // x\n {$limit: 2}])")
                .unwrap();
        assert!(matches!(q.body, QueryBody::Aggregate(ref s) if s.len() == 2));
    }

    #[test]
    fn implicit_and_is_flattened() {
        let a = parse("db.c.find({a: {$gt: 1, $lt: 5}, b: 2})").unwrap();
        let b = parse("db.c.find({$and: [{a: {$gt: 1}}, {a: {$lt: 5}}, {b: 2}]})").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsupported_features() {
        for text in [
            "db.c.aggregate([{$facet: {}}])",
            "db.c.aggregate([{$addFields: {x: 1}}])",
            "db.c.find({a: {$elemMatch: {b: 1}}})",
            "db.c.find({$expr: {$gt: ['$a', 1]}})",
            "db.c.find({d: ISODate('2020-01-01')})",
            "db.c.find({a: /x/})",
            "db.c.distinct('a')",
            "db.c.aggregate([{$group: {_id: null, s: {$stdDevPop: '$a'}}}])",
            "db.c.aggregate([{$project: {x: {$concat: ['$a', '$b']}}}])",
            "db.c.aggregate([{$lookup: {from: 'o', pipeline: [], as: 'x'}}])",
            "db.c.aggregate([{$unwind: {path: '$a', preserveNullAndEmptyArrays: true}}])",
            "db.c.find({a: {$regex: 'x', $options: 'i'}})",
            "db.c.find({}).skip(2)",
        ] {
            assert!(
                matches!(parse_err(text), QueryError::Unsupported(_)),
                "{text}"
            );
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let cases = [
            ("db.c.find({a: })", 14),
            ("db.c.find({a: 1}", 16),
            ("x.c.find({})", 0),
            ("db.c.find({a: 1, a: 2})", 17),
            ("db.c.find({}) trailing", 14),
            ("db.c.find({a: 'open})", 14),
        ];
        for (text, at) in cases {
            match parse_err(text) {
                QueryError::Parse { position, .. } => assert_eq!(position, at, "{text}"),
                e => panic!("{text}: {e}"),
            }
        }
    }

    #[test]
    fn semantic_errors() {
        for text in [
            "db.c.find({a: {$in: 1}})",
            "db.c.find({a: {$regex: 5}})",
            "db.c.find({a: {$regex: '('}})",
            "db.c.find({a: {$gt: 1, b: 2}})",
            "db.c.find({}, {a: 1, b: 0})",
            "db.c.aggregate([{$sort: {a: 2}}])",
            "db.c.aggregate([{$limit: -1}])",
            "db.c.aggregate([{$group: {total: {$sum: 1}}}])",
            "db.c.aggregate([{$match: {}, $limit: 1}])",
            "db.c.aggregate([{$count: ''}])",
            "db.c.find({$or: []})",
            "db.c.find({'a..b': 1})",
        ] {
            assert!(
                matches!(parse_err(text), QueryError::Parse { .. }),
                "{text}"
            );
        }
    }

    #[test]
    fn id_exclusion_mixes_with_inclusion() {
        let q = parse("db.c.find({}, {_id: 0, a: 1, b: '$c.d'})").unwrap();
        let QueryBody::Find(f) = q.body else { panic!() };
        let p = f.projection.unwrap();
        assert!(p.is_inclusion());
        assert!(p.excludes_id());
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let text = format!(
            "db.c.find({{a: {}1{}}})",
            "[".repeat(10_000),
            "]".repeat(10_000)
        );
        assert!(matches!(parse(&text), Err(QueryError::Parse { .. })));
    }

    #[test]
    fn string_escapes() {
        let q = parse(r#"db.c.find({a: "q\"é😀\n"})"#).unwrap();
        let QueryBody::Find(f) = q.body else { panic!() };
        let Filter::Cmp(c) = f.filter else { panic!() };
        assert_eq!(c.value, Value::from("q\"é😀\n"));
    }
}
