//! Toolkit for multilingual natural-language-to-MongoDB work: a parser and
//! in-process executor for MongoDB shell queries, the six query/execution
//! evaluation metrics, schema translation tools, per-language example
//! retrieval, and a provider-driven generation pipeline.

pub mod dataset;
pub mod engine;
pub mod metrics;
pub mod pipeline;
pub mod query;
pub mod retrieval;
pub mod schema;
pub mod value;

pub use engine::{results_equal, Database, EngineError, ResultSet};
pub use query::{parse, serialize, FieldPath, Query, QueryError};
pub use value::{Document, Value};
