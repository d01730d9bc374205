#![allow(dead_code)]

pub mod ast;
pub mod oracle;

use std::path::PathBuf;

use polynosql::dataset::{load_catalog, read_jsonl, Catalog, DatasetRecord};
use polynosql::Database;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn registrations() -> Database {
    Database::load(&fixture("registrations")).expect("registrations fixture")
}

pub fn corpus_catalog() -> Catalog {
    load_catalog(&fixture("corpus/dbs")).expect("corpus databases")
}

pub fn corpus_items() -> Vec<DatasetRecord> {
    read_jsonl(&fixture("corpus/dataset.jsonl")).expect("corpus items")
}

pub fn corpus_train() -> Vec<DatasetRecord> {
    read_jsonl(&fixture("corpus/train.jsonl")).expect("corpus training pairs")
}

pub const REG_NLQ: &str = "学生在西班牙语课程的注册日期是什么时候？";

pub const REG_TARGET: &str = r#"db.科目.aggregate([{ $unwind: "$课程" }, { $match: { "课程.课程名称": "Spanish" } }, { $unwind: "$课程.学生课程注册" }, { $project: { 注册的日期: "$课程.学生课程注册.注册的日期", _id: 0 } }]);"#;

/// Fine-tuned small-model prediction; same text as the SMART one.
pub const REG_FINETUNED: &str = r#"db.课程.aggregate([{ $match: { 课程名称: "Spanish" } }, { $unwind: "$学生课程注册" }, { $project: { 注册的日期: "$学生课程注册.注册的日期", _id: 0 } }]);"#;

pub const REG_RAG: &str = r#"db.科目.aggregate([{ $unwind: "$课程" }, { $match: { "课程.课程名称": "西班牙语" } }, { $unwind: "$课程.学生课程注册" }, { $project: { 注册日期: "$课程.学生课程注册.注册的日期", _id: 0 } }]);"#;

pub const REG_SMART: &str = r#"db.课程.aggregate([{ $match: { 课程名称: "Spanish" } }, { $unwind: "$学生课程注册" }, { $project: { 注册的日期: "$学生课程注册.注册的日期", _id: 0 } }]);"#;

use std::sync::Arc;

use polynosql::pipeline::{EchoGoldProvider, ItemOutput, Pipeline, PipelineConfig, ProviderSet};
use polynosql::retrieval::{build_index, HashingEmbedder};

/// Pipeline over the corpus fixture with the echo provider on every role
/// and an index built from the training pairs.
pub fn echo_pipeline(config: PipelineConfig) -> Pipeline {
    let dbs = corpus_catalog();
    let items = corpus_items();
    let embedder = HashingEmbedder::default();
    let pairs: Vec<_> = corpus_train().iter().map(|r| r.example()).collect();
    let indices = build_index(&pairs, &embedder).expect("index builds");
    let providers = ProviderSet::uniform(Arc::new(EchoGoldProvider::new(&items, &dbs)));
    Pipeline::new(
        config,
        polynosql::pipeline::Templates::builtin(),
        providers,
        dbs,
        indices,
        Box::new(embedder),
    )
}

pub fn run_corpus(config: PipelineConfig) -> Vec<ItemOutput> {
    echo_pipeline(config)
        .run_all(&corpus_items())
        .expect("pipeline runs")
}
