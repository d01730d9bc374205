mod support;

use polynosql::dataset::{read_jsonl, DatasetRecord};
use polynosql::metrics::{
    evaluate, exact_match, execution_metrics, fields_coverage, stages_match, EvalItem,
    ExecutionFlags,
};
use polynosql::parse;
use polynosql::retrieval::Language;

fn q(text: &str) -> polynosql::Query {
    parse(text).unwrap_or_else(|e| panic!("{text}: {e}"))
}

fn exec(pred: &str, gold: &str) -> (bool, bool, bool) {
    let f = execution_metrics(&support::registrations(), &q(pred), &q(gold)).unwrap();
    (f.ex, f.efm, f.evm)
}

#[test]
fn query_metrics_on_registrations_rows() {
    let target = q(support::REG_TARGET);
    assert!(exact_match(&target, &target));
    assert!(!exact_match(&q(support::REG_SMART), &target));
    assert!(stages_match(&q(support::REG_RAG), &target));
    assert!(!stages_match(&q(support::REG_FINETUNED), &target));
    assert!(exact_match(
        &q(r#"db.c.find({"a": 1})"#),
        &q("db.c.find({a: 1});")
    ));
}

#[test]
fn field_coverage_is_a_superset_test() {
    let gold = q("db.c.find({a: 1}, {b: 1}).sort({d: 1})");
    assert!(fields_coverage(
        &q("db.c.find({a: 1}, {b: 1, e: 1}).sort({d: 1})"),
        &gold
    ));
    assert!(!fields_coverage(&q("db.c.find({a: 1}, {b: 1})"), &gold));
}

#[test]
fn execution_metrics_on_registrations_rows() {
    let t = support::REG_TARGET;
    assert_eq!(exec(t, t), (true, true, true));
    assert_eq!(exec(support::REG_RAG, t), (false, false, false));
    let renamed = t.replace("注册的日期: ", "注册日期: ");
    assert_eq!(exec(&renamed, t), (false, false, true));
    let failing = r#"db.nowhere.find({})"#;
    assert_eq!(
        execution_metrics(&support::registrations(), &q(failing), &q(t)).unwrap(),
        ExecutionFlags {
            ex: false,
            efm: false,
            evm: false
        }
    );
}

#[test]
fn all_gold_fixture_scores_one() {
    let dbs = support::corpus_catalog();
    let records: Vec<DatasetRecord> =
        read_jsonl(&support::fixture("corpus/all_gold.jsonl")).unwrap();
    let items: Vec<EvalItem> = records.iter().map(DatasetRecord::eval_item).collect();
    let report = evaluate(|id| dbs.get(id), &items).unwrap();
    assert_eq!(report.n, 20);
    assert_eq!(report.ratios(), [1.0; 6]);
    let again = evaluate(|id| dbs.get(id), &items).unwrap();
    assert_eq!(report.to_json(), again.to_json());
}

#[test]
fn unparseable_prediction_scores_zero_and_bad_items_are_listed() {
    let db = support::registrations();
    let item = |gold: &str, pred: &str, db_id: &str| EvalItem {
        nlq: support::REG_NLQ.into(),
        language: Language::Zh,
        db_id: db_id.into(),
        gold_text: gold.into(),
        pred_text: pred.into(),
    };
    let report = evaluate(
        |id| (id == "registrations").then_some(&db),
        &[item(support::REG_TARGET, "SELECT 1", "registrations")],
    )
    .unwrap();
    assert!(!report.per_item[0].pred_parsed);
    assert_eq!(report.ratios(), [0.0; 6]);

    let err = evaluate(
        |id| (id == "registrations").then_some(&db),
        &[
            item(support::REG_TARGET, support::REG_TARGET, "registrations"),
            item(support::REG_TARGET, "", "missing"),
            item("db.科目.find(", "", "registrations"),
        ],
    )
    .unwrap_err();
    let indices: Vec<usize> = err.0.iter().map(|p| p.index).collect();
    assert_eq!(indices, [1, 2]);
}
