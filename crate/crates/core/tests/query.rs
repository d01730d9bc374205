mod support;

use std::collections::BTreeSet;

use polynosql::query::{field_inventory, sketch_of, stage_signature, QueryBody, Stage};
use polynosql::{parse, serialize, FieldPath, QueryError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn paths(xs: &[&str]) -> BTreeSet<FieldPath> {
    xs.iter().map(|p| FieldPath::parse(p).unwrap()).collect()
}

#[test]
fn registrations_target_shape() {
    let q = parse(support::REG_TARGET).unwrap();
    assert_eq!(q.collection, "科目");
    let QueryBody::Aggregate(stages) = &q.body else {
        panic!("aggregate expected")
    };
    assert!(matches!(
        stages[..],
        [
            Stage::Unwind(_),
            Stage::Match(_),
            Stage::Unwind(_),
            Stage::Project(_)
        ]
    ));
    assert_eq!(
        stage_signature(&q),
        ["unwind", "match", "unwind", "project"]
    );
    assert_eq!(
        field_inventory(&q),
        paths(&[
            "课程",
            "课程.课程名称",
            "课程.学生课程注册",
            "课程.学生课程注册.注册的日期",
            "注册的日期"
        ])
    );
    let expected = parse(
        r#"db.COLLECTION.aggregate([{$unwind:"$FIELD_1"},{$match:{"FIELD_2":"VALUE_1"}},{$unwind:"$FIELD_3"},{$project:{FIELD_4:"$FIELD_5", _id:0}}])"#,
    )
    .unwrap();
    assert_eq!(sketch_of(&q), expected);
}

#[test]
fn empty_find() {
    let q = parse("db.c.find({})").unwrap();
    let QueryBody::Find(f) = &q.body else {
        panic!("find expected")
    };
    assert!(f.projection.is_none() && f.sort.is_none() && f.limit.is_none());
    assert_eq!(serialize(&q), "db.c.find({})");
    assert_eq!(stage_signature(&q), ["find"]);
    assert!(field_inventory(&q).is_empty());
    assert_eq!(sketch_of(&q).to_string(), "db.COLLECTION.find({})");
}

#[test]
fn find_pseudo_stages_and_group_inventory() {
    let q = parse("db.c.find({a:1},{b:1}).sort({b:-1}).limit(3)").unwrap();
    assert_eq!(stage_signature(&q), ["find", "projection", "sort", "limit"]);
    let g = parse(r#"db.c.aggregate([{$group:{_id:"$x", t:{$sum:"$y"}}}])"#).unwrap();
    assert_eq!(field_inventory(&g), paths(&["x", "y", "t"]));
}

#[test]
fn quoting_style_does_not_matter() {
    let a = parse(r#"db.c.find({"a.b": {"$gt": 1}}, {"name": 1})"#).unwrap();
    let b = parse(r#"db.c.find({'a.b': {$gt: 1}}, {name: 1});"#).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        parse(r#"db.getCollection("c").find({})"#).unwrap(),
        parse("db.c.find({})").unwrap()
    );
}

#[test]
fn unsupported_and_malformed_input() {
    assert!(matches!(
        parse(r#"db.c.aggregate([{$facet: {}}])"#),
        Err(QueryError::Unsupported(_))
    ));
    assert!(matches!(
        parse(r#"db.c.find({a: {$where: "x"}})"#),
        Err(QueryError::Unsupported(_))
    ));
    assert!(matches!(
        parse("db.c.find({a: 1"),
        Err(QueryError::Parse { .. })
    ));
    assert!(matches!(
        parse(r#"db.c.find({a: 1, a: 2})"#),
        Err(QueryError::Parse { .. })
    ));
    assert!(parse("").is_err());
}

#[test]
fn generated_queries_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let q = support::ast::query(&mut rng);
        assert_eq!(parse(&q.to_string()).unwrap(), q, "{q}");
    }
}

#[test]
fn serialization_is_idempotent_on_sketches() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let s = sketch_of(&support::ast::query(&mut rng));
        assert_eq!(parse(&s.to_string()).unwrap(), s);
        assert_eq!(sketch_of(&s), s, "{s}");
    }
}

proptest! {
    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,80}") {
        let _ = parse(&text);
    }

    #[test]
    fn queryish_text_never_panics(text in r#"db\.[a-z课]{1,3}\.(find|aggregate)\(\[?\{[\$a-z:"'\[\]\{\}, 0-9.\-]{0,40}"#) {
        let _ = parse(&text);
    }

    #[test]
    fn string_literals_round_trip(s in "\\PC{0,24}") {
        let text = format!("db.c.find({{a: {}}})", serde_json::to_string(&s).unwrap());
        let q = parse(&text).unwrap();
        prop_assert_eq!(parse(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn numbers_round_trip(i in any::<i64>(), f in -1e300f64..1e300) {
        let text = format!("db.c.find({{a: {i}, b: {f:?}}})");
        let q = parse(&text).unwrap();
        prop_assert_eq!(parse(&q.to_string()).unwrap(), q);
    }
}
