//! Language classification and per-language example libraries with exact
//! cosine top-k retrieval.

mod language;

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use language::{classify_language, ClassificationAmbiguous, Language, UnknownLanguage};

pub const DEFAULT_K: usize = 6;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_DIMENSION: usize = 256;
pub const NORM_TOLERANCE: f64 = 1e-6;
/// Slack for comparing similarities of stored `f32` unit vectors.
pub const SIMILARITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub nlq: String,
    pub query_text: String,
    pub language: Language,
    pub db_id: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("embedding failed: {0}")]
pub struct EmbeddingError(pub String);

/// Text to fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbeddingError>;
}

/// Deterministic feature-hashing embedder over lower-cased word unigrams and
/// character trigrams, with signed buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct HashingEmbedder {
    pub dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl HashingEmbedder {
    fn add(&self, v: &mut [f32], feature: &str) {
        let mut h = FnvHasher::default();
        h.write(feature.as_bytes());
        let h = h.finish();
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        v[(h % self.dimension as u64) as usize] += sign;
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbeddingError> {
        if self.dimension == 0 {
            return Err(EmbeddingError("dimension must be positive".into()));
        }
        let lower = text.to_lowercase();
        let mut v = vec![0f32; self.dimension];
        for word in lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            self.add(&mut v, &format!("w:{word}"));
        }
        let chars: Vec<char> = format!(
            " {} ",
            lower.split_whitespace().collect::<Vec<_>>().join(" ")
        )
        .chars()
        .collect();
        for gram in chars.windows(3) {
            let g: String = gram.iter().collect();
            if g.trim().is_empty() {
                continue;
            }
            self.add(&mut v, &format!("c:{g}"));
        }
        Ok(v)
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|x| f64::from(*x) * f64::from(*x))
        .sum::<f64>()
        .sqrt()
}

/// Unit-length copy of `v`, or `None` for the zero vector.
pub fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| (f64::from(*x) / n) as f32).collect())
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub vector: Vec<f32>,
    pub pair: ExamplePair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    pub language: Language,
    pub dimension: usize,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub similarity: f64,
    pub pair: &'a ExamplePair,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("pair {index} ({nlq:?}): {source}")]
    Embedding {
        index: usize,
        nlq: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("pair {index} ({nlq:?}): embedding has dimension {got}, expected {expected}")]
    Dimension {
        index: usize,
        nlq: String,
        got: usize,
        expected: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    language: Language,
    dimension: usize,
    count: usize,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries with cosine similarity at least `threshold`, best first, at
    /// most `k`. Similarities within [`SIMILARITY_TOLERANCE`] of each other
    /// or of the threshold count as equal; equal hits keep insertion order.
    pub fn search(&self, query: &[f32], k: usize, threshold: f64) -> Vec<Hit<'_>> {
        let q = normalize(query);
        let mut hits: Vec<(usize, Hit<'_>)> = self
            .entries
            .iter()
            .map(|e| Hit {
                similarity: q.as_deref().map_or(0.0, |q| dot(q, &e.vector)),
                pair: &e.pair,
            })
            .enumerate()
            .filter(|(_, h)| h.similarity >= threshold - SIMILARITY_TOLERANCE)
            .collect();
        hits.sort_by(|(_, a), (_, b)| b.similarity.total_cmp(&a.similarity));
        let mut start = 0;
        while start < hits.len() {
            let top = hits[start].1.similarity;
            let end = start
                + hits[start..]
                    .iter()
                    .take_while(|(_, h)| top - h.similarity <= SIMILARITY_TOLERANCE)
                    .count();
            hits[start..end].sort_by_key(|(i, _)| *i);
            start = end;
        }
        hits.truncate(k);
        hits.into_iter().map(|(_, h)| h).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let file = IndexFile {
            language: self.language,
            dimension: self.dimension,
            count: self.entries.len(),
            entries: self.entries.clone(),
        };
        let text = serde_json::to_string(&file).expect("index serializes");
        fs::write(path, text + "\n").map_err(|source| IndexError::Io {
            path: path.to_owned(),
            source,
        })
    }

    /// Reads an index file and checks its header and that every vector is
    /// unit length.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bad = |message: String| IndexError::Format {
            path: path.to_owned(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|source| IndexError::Io {
            path: path.to_owned(),
            source,
        })?;
        let file: IndexFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if file.count != file.entries.len() {
            return Err(bad(format!(
                "header count {} but {} entries",
                file.count,
                file.entries.len()
            )));
        }
        for (i, e) in file.entries.iter().enumerate() {
            if e.vector.len() != file.dimension {
                return Err(bad(format!("entry {i} has dimension {}", e.vector.len())));
            }
            let n = norm(&e.vector);
            if (n - 1.0).abs() > NORM_TOLERANCE {
                return Err(bad(format!("entry {i} has norm {n}")));
            }
        }
        Ok(VectorIndex {
            language: file.language,
            dimension: file.dimension,
            entries: file.entries,
        })
    }
}

pub type IndexSet = BTreeMap<Language, VectorIndex>;

/// Embeds every pair and buckets the unit vectors by language.
pub fn build_index(pairs: &[ExamplePair], embedder: &dyn Embedder) -> Result<IndexSet, IndexError> {
    let dim = embedder.dimension();
    let vectors: Vec<Result<Vec<f32>, IndexError>> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let raw = embedder
                .embed(&p.nlq)
                .map_err(|source| IndexError::Embedding {
                    index,
                    nlq: p.nlq.clone(),
                    source,
                })?;
            if raw.len() != dim {
                return Err(IndexError::Dimension {
                    index,
                    nlq: p.nlq.clone(),
                    got: raw.len(),
                    expected: dim,
                });
            }
            normalize(&raw).ok_or_else(|| IndexError::Embedding {
                index,
                nlq: p.nlq.clone(),
                source: EmbeddingError("zero vector".into()),
            })
        })
        .collect();
    let mut set = IndexSet::new();
    for (pair, vector) in pairs.iter().zip(vectors) {
        set.entry(pair.language)
            .or_insert_with(|| VectorIndex {
                language: pair.language,
                dimension: dim,
                entries: Vec::new(),
            })
            .entries
            .push(IndexEntry {
                vector: vector?,
                pair: pair.clone(),
            });
    }
    Ok(set)
}

pub fn retrieve<'a>(
    index: &'a VectorIndex,
    embedder: &dyn Embedder,
    text: &str,
    k: usize,
    threshold: f64,
) -> Result<Vec<Hit<'a>>, EmbeddingError> {
    Ok(index.search(&embedder.embed(text)?, k, threshold))
}

pub fn save_index_set(set: &IndexSet, dir: &Path) -> Result<(), IndexError> {
    fs::create_dir_all(dir).map_err(|source| IndexError::Io {
        path: dir.to_owned(),
        source,
    })?;
    for (lang, index) in set {
        index.save(&dir.join(format!("{}.json", lang.code())))?;
    }
    Ok(())
}

/// Loads every `<LANG>.json` index in `dir`.
pub fn load_index_set(dir: &Path) -> Result<IndexSet, IndexError> {
    let mut set = IndexSet::new();
    for lang in Language::ALL {
        let path = dir.join(format!("{}.json", lang.code()));
        if path.is_file() {
            let index = VectorIndex::load(&path)?;
            if index.language != lang {
                return Err(IndexError::Format {
                    path,
                    message: format!("file holds a {} index", index.language),
                });
            }
            set.insert(lang, index);
        }
    }
    Ok(set)
}
