//! Query-based (EM, QSM, QFC) and execution-based (EX, EFM, EVM) metrics.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    execute, multiset_eq, results_equal, Database, EngineError, ResultSet, FLOAT_TOLERANCE,
};
use crate::query::{field_inventory, parse, stage_signature, Query};
use crate::retrieval::Language;
use crate::value::{Document, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub nlq: String,
    pub language: Language,
    pub db_id: String,
    pub gold_text: String,
    pub pred_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub em: bool,
    pub qsm: bool,
    pub qfc: bool,
    pub ex: bool,
    pub efm: bool,
    pub evm: bool,
}

impl Flags {
    pub const ALL_TRUE: Flags = Flags {
        em: true,
        qsm: true,
        qfc: true,
        ex: true,
        efm: true,
        evm: true,
    };

    pub fn as_array(&self) -> [bool; 6] {
        [self.em, self.qsm, self.qfc, self.ex, self.efm, self.evm]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionFlags {
    pub ex: bool,
    pub efm: bool,
    pub evm: bool,
}

pub fn exact_match(pred: &Query, gold: &Query) -> bool {
    pred == gold
}

pub fn stages_match(pred: &Query, gold: &Query) -> bool {
    stage_signature(pred) == stage_signature(gold)
}

/// Every field the gold query mentions also appears in the prediction.
pub fn fields_coverage(pred: &Query, gold: &Query) -> bool {
    field_inventory(pred).is_superset(&field_inventory(gold))
}

fn key_set(d: &Document) -> Vec<&str> {
    let mut keys: Vec<&str> = d.keys().map(String::as_str).collect();
    keys.sort_unstable();
    keys
}

pub fn field_names_match(a: &ResultSet, b: &ResultSet) -> bool {
    let ka: Vec<_> = a.docs.iter().map(key_set).collect();
    let kb: Vec<_> = b.docs.iter().map(key_set).collect();
    multiset_eq(&ka, &kb, |x, y| x == y)
}

/// Equality with object keys ignored at every depth: objects compare as
/// multisets of their values.
pub fn values_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => document_values_match(x, y),
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(l, r)| values_match(l, r))
        }
        _ => a.approx_eq(b, FLOAT_TOLERANCE),
    }
}

pub fn document_values_match(a: &Document, b: &Document) -> bool {
    let va: Vec<&Value> = a.values().collect();
    let vb: Vec<&Value> = b.values().collect();
    multiset_eq(&va, &vb, |x, y| values_match(x, y))
}

/// Per-document value comparison with field names discarded; order-sensitive
/// only when both sides are ordered.
pub fn result_values_match(a: &ResultSet, b: &ResultSet) -> bool {
    if a.ordered && b.ordered {
        a.len() == b.len()
            && a.docs
                .iter()
                .zip(&b.docs)
                .all(|(x, y)| document_values_match(x, y))
    } else {
        multiset_eq(&a.docs, &b.docs, document_values_match)
    }
}

pub fn compare_results(pred: &ResultSet, gold: &ResultSet) -> ExecutionFlags {
    ExecutionFlags {
        ex: results_equal(pred, gold),
        efm: field_names_match(pred, gold),
        evm: result_values_match(pred, gold),
    }
}

/// EX, EFM and EVM of `pred` against `gold`. A prediction that fails to
/// execute scores false on all three; a failing gold query is an error.
pub fn execution_metrics(
    db: &Database,
    pred: &Query,
    gold: &Query,
) -> Result<ExecutionFlags, EngineError> {
    let gold_rs = execute(db, gold)?;
    Ok(match execute(db, pred) {
        Ok(pred_rs) => compare_results(&pred_rs, &gold_rs),
        Err(_) => ExecutionFlags::default(),
    })
}

pub fn score(db: &Database, pred: &Query, gold: &Query) -> Result<Flags, EngineError> {
    let exec = execution_metrics(db, pred, gold)?;
    Ok(Flags {
        em: exact_match(pred, gold),
        qsm: stages_match(pred, gold),
        qfc: fields_coverage(pred, gold),
        ex: exec.ex,
        efm: exec.efm,
        evm: exec.evm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub db_id: String,
    pub language: Language,
    pub pred_parsed: bool,
    #[serde(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub n: usize,
    pub em: usize,
    pub qsm: usize,
    pub qfc: usize,
    pub ex: usize,
    pub efm: usize,
    pub evm: usize,
}

/// Aggregate ratios (rounded to 4 decimals) plus per-item flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub em: f64,
    pub qsm: f64,
    pub qfc: f64,
    pub ex: f64,
    pub efm: f64,
    pub evm: f64,
    pub per_item: Vec<ItemReport>,
}

impl MetricReport {
    pub fn from_items(per_item: Vec<ItemReport>) -> Self {
        let c = count(&per_item);
        let ratio = |k: usize| {
            if c.n == 0 {
                0.0
            } else {
                (k as f64 / c.n as f64 * 1e4).round() / 1e4
            }
        };
        MetricReport {
            n: c.n,
            em: ratio(c.em),
            qsm: ratio(c.qsm),
            qfc: ratio(c.qfc),
            ex: ratio(c.ex),
            efm: ratio(c.efm),
            evm: ratio(c.evm),
            per_item,
        }
    }

    pub fn counts(&self) -> Counts {
        count(&self.per_item)
    }

    pub fn ratios(&self) -> [f64; 6] {
        [self.em, self.qsm, self.qfc, self.ex, self.efm, self.evm]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn count(items: &[ItemReport]) -> Counts {
    let mut c = Counts {
        n: items.len(),
        ..Counts::default()
    };
    for i in items {
        let f = i.flags;
        c.em += f.em as usize;
        c.qsm += f.qsm as usize;
        c.qfc += f.qfc as usize;
        c.ex += f.ex as usize;
        c.efm += f.efm as usize;
        c.evm += f.evm as usize;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemProblem {
    pub index: usize,
    pub db_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct DatasetError(pub Vec<ItemProblem>);

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} invalid item(s):", self.0.len())?;
        for p in &self.0 {
            writeln!(f, "  item {} (db {}): {}", p.index, p.db_id, p.reason)?;
        }
        Ok(())
    }
}

fn evaluate_one<'a>(
    resolve: &(impl Fn(&str) -> Option<&'a Database> + Sync),
    index: usize,
    item: &EvalItem,
) -> Result<ItemReport, ItemProblem> {
    let problem = |reason: String| ItemProblem {
        index,
        db_id: item.db_id.clone(),
        reason,
    };
    let db = resolve(&item.db_id).ok_or_else(|| problem("database not found".into()))?;
    let gold = parse(&item.gold_text).map_err(|e| problem(format!("gold query: {e}")))?;
    let gold_rs = execute(db, &gold).map_err(|e| problem(format!("gold execution: {e}")))?;
    let (pred_parsed, flags) = match parse(&item.pred_text) {
        Err(_) => (false, Flags::default()),
        Ok(pred) => {
            let exec = match execute(db, &pred) {
                Ok(rs) => compare_results(&rs, &gold_rs),
                Err(_) => ExecutionFlags::default(),
            };
            let flags = Flags {
                em: exact_match(&pred, &gold),
                qsm: stages_match(&pred, &gold),
                qfc: fields_coverage(&pred, &gold),
                ex: exec.ex,
                efm: exec.efm,
                evm: exec.evm,
            };
            (true, flags)
        }
    };
    Ok(ItemReport {
        db_id: item.db_id.clone(),
        language: item.language,
        pred_parsed,
        flags,
    })
}

/// Scores every item in parallel. Per-item results keep input order.
pub fn evaluate<'a>(
    resolve: impl Fn(&str) -> Option<&'a Database> + Sync,
    items: &[EvalItem],
) -> Result<MetricReport, DatasetError> {
    let results: Vec<_> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| evaluate_one(&resolve, i, item))
        .collect();
    let mut reports = Vec::with_capacity(items.len());
    let mut problems = Vec::new();
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(p) => problems.push(p),
        }
    }
    if problems.is_empty() {
        Ok(MetricReport::from_items(reports))
    } else {
        Err(DatasetError(problems))
    }
}
