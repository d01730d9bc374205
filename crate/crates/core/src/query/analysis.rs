use std::collections::{BTreeSet, HashMap};
use std::convert::Infallible;

use super::{rewrite, CmpOp, FieldPath, NameRole, PathRole, Query, QueryBody, Rewriter, ValueRole};
use crate::value::Value;

pub const COLLECTION_PLACEHOLDER: &str = "COLLECTION";

/// Stage keywords in order. `find` queries map to the pseudo-stages
/// `find`, `projection`, `sort`, `limit` for the parts that are present.
pub fn stage_signature(q: &Query) -> Vec<&'static str> {
    match &q.body {
        QueryBody::Aggregate(stages) => stages.iter().map(|s| s.keyword()).collect(),
        QueryBody::Find(f) => {
            let mut sig = vec!["find"];
            if f.projection.is_some() {
                sig.push("projection");
            }
            if f.sort.is_some() {
                sig.push("sort");
            }
            if f.limit.is_some() {
                sig.push("limit");
            }
            sig
        }
    }
}

struct Inventory(BTreeSet<FieldPath>);

impl Rewriter for Inventory {
    type Error = Infallible;

    fn path(&mut self, path: &FieldPath, role: PathRole<'_>) -> Result<FieldPath, Infallible> {
        if role != PathRole::IdSuppression {
            self.0.insert(path.clone());
        }
        Ok(path.clone())
    }

    fn name(&mut self, name: &str, role: NameRole) -> Result<String, Infallible> {
        if matches!(role, NameRole::GroupAlias | NameRole::CountAlias) {
            if let Ok(p) = FieldPath::parse(name) {
                self.0.insert(p);
            }
        }
        Ok(name.to_owned())
    }
}

/// Every field path the query reads, plus the output names it defines
/// (projection aliases, group accumulators, lookup `as`, count alias).
/// `_id: 0` suppression entries are not counted.
pub fn field_inventory(q: &Query) -> BTreeSet<FieldPath> {
    let mut inv = Inventory(BTreeSet::new());
    let Ok(_) = rewrite(q, &mut inv);
    inv.0
}

#[derive(Default)]
struct Sketcher {
    fields: HashMap<FieldPath, usize>,
    values: Vec<Value>,
    collections: Vec<String>,
}

impl Sketcher {
    fn field(&mut self, path: &FieldPath) -> FieldPath {
        let next = self.fields.len() + 1;
        let n = *self.fields.entry(path.clone()).or_insert(next);
        FieldPath::parse(&format!("FIELD_{n}")).expect("placeholder is a valid path")
    }
}

impl Rewriter for Sketcher {
    type Error = Infallible;

    fn collection(&mut self, name: &str, _primary: bool) -> Result<String, Infallible> {
        let idx = match self.collections.iter().position(|c| c == name) {
            Some(i) => i,
            None => {
                self.collections.push(name.to_owned());
                self.collections.len() - 1
            }
        };
        Ok(if idx == 0 {
            COLLECTION_PLACEHOLDER.to_owned()
        } else {
            format!("{COLLECTION_PLACEHOLDER}_{}", idx + 1)
        })
    }

    fn path(&mut self, path: &FieldPath, role: PathRole<'_>) -> Result<FieldPath, Infallible> {
        Ok(match role {
            PathRole::IdSuppression => path.clone(),
            _ => self.field(path),
        })
    }

    fn name(&mut self, name: &str, _role: NameRole) -> Result<String, Infallible> {
        Ok(match FieldPath::parse(name) {
            Ok(p) => self.field(&p).to_string(),
            Err(_) => name.to_owned(),
        })
    }

    fn value(&mut self, value: &Value, role: ValueRole) -> Result<Value, Infallible> {
        match role {
            // structural flags and the `{$sum: 1}` counting idiom stay as written
            ValueRole::Filter(CmpOp::Exists) => return Ok(value.clone()),
            ValueRole::AccumulatorArg(_) if value.is_number() => return Ok(value.clone()),
            _ => {}
        }
        let n = match self.values.iter().position(|v| v == value) {
            Some(i) => i + 1,
            None => {
                self.values.push(value.clone());
                self.values.len()
            }
        };
        Ok(Value::String(format!("VALUE_{n}")))
    }
}

/// Replaces collection names, field paths, output names and literal values
/// with positional placeholders (`COLLECTION`, `FIELD_k`, `VALUE_k`),
/// keeping the operator structure intact. Repeated paths and values reuse
/// their placeholder.
pub fn sketch_of(q: &Query) -> Query {
    let Ok(sketch) = rewrite(q, &mut Sketcher::default());
    sketch
}
