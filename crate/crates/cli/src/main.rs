//! `polynosql` command-line tool. Data goes to stdout, diagnostics to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use polynosql::dataset::{load_catalog, read_jsonl, to_jsonl, write_jsonl, Catalog, DatasetRecord};
use polynosql::metrics::{evaluate, EvalItem};
use polynosql::pipeline::corpora::build_corpora;
use polynosql::pipeline::{augment, AugmentSettings, Pipeline, PipelineConfig, ProviderSet, Role};
use polynosql::retrieval::{
    build_index, classify_language, load_index_set, retrieve, save_index_set, HashingEmbedder,
    IndexSet, Language, VectorIndex,
};
use polynosql::schema::{
    apply_map, apply_map_query, detect_collisions, infer_schema, split_dataset, FieldTranslationMap,
};
use polynosql::{parse, Database};

#[derive(Parser)]
#[command(
    name = "polynosql",
    version,
    about = "Parse, run, score and generate MongoDB queries over local JSON databases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form of the query in FILE (`-` reads stdin).
    Parse { file: PathBuf },
    /// Run a query against a database directory and print the results as JSON.
    Exec {
        #[arg(long)]
        db: PathBuf,
        query: String,
    },
    /// Score predictions against gold queries.
    Eval {
        #[arg(long)]
        dbs: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
    },
    /// Print the inferred schema of a database.
    Schema {
        #[arg(long)]
        db: PathBuf,
    },
    /// Rename a database, and optionally a dataset's queries, through a translation map.
    MapApply {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset whose gold queries are rewritten too.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        data_out: Option<PathBuf>,
    },
    /// Report names that a translation map sends to the same image. Exits 2 if there are any.
    MapCheck {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        db: PathBuf,
    },
    /// Split a dataset into train and test parts by database.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.85)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Build per-language example indices with the hashing embedder.
    IndexBuild {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pipeline config whose embedder is used instead.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the nearest stored examples for a question.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(short, long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Index to search; detected from the text when omitted.
        #[arg(long)]
        language: Option<Language>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the generation pipeline over a dataset.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Provider calls, one JSON line each.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        dbs: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Generate new question/query pairs from a dataset.
    Augment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejections: Option<PathBuf>,
        #[arg(long)]
        dbs: Option<PathBuf>,
    },
    /// Write sketch and schema-link training corpora as JSONL.
    ExportCorpora {
        #[arg(long)]
        dbs: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => emit(text),
    }
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).with_context(|| format!("config {}", path.display()))
}

fn catalog(flag: Option<PathBuf>, config: &PipelineConfig) -> Result<Catalog> {
    let Some(dir) = flag.or_else(|| config.dbs.clone()) else {
        bail!("no database directory: pass --dbs or set `dbs` in the config");
    };
    load_catalog(&dir).with_context(|| format!("databases in {}", dir.display()))
}

fn records(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_jsonl(path).with_context(|| format!("dataset {}", path.display()))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Parse { file } => {
            let text = if file.as_os_str() == "-" {
                std::io::read_to_string(std::io::stdin())?
            } else {
                fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?
            };
            match parse(&text) {
                Ok(q) => emit(&format!("{q}\n"))?,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(1));
                }
            }
        }
        Command::Exec { db, query } => {
            let db = Database::load(&db)?;
            let rs = db.execute(&parse(&query)?)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&rs.docs)?))?;
        }
        Command::Eval {
            dbs,
            data,
            out,
            parallelism,
        } => {
            let dbs = load_catalog(&dbs)?;
            let items: Vec<EvalItem> = records(&data)?
                .iter()
                .map(DatasetRecord::eval_item)
                .collect();
            let report = pool(parallelism)?.install(|| evaluate(|id| dbs.get(id), &items))?;
            write_out(out.as_deref(), &report.to_json())?;
            let r = report.ratios();
            eprintln!(
                "n={} em={:.4} qsm={:.4} qfc={:.4} ex={:.4} efm={:.4} evm={:.4}",
                report.n, r[0], r[1], r[2], r[3], r[4], r[5]
            );
        }
        Command::Schema { db } => {
            emit(&format!(
                "{}\n",
                infer_schema(&Database::load(&db)?).to_json()
            ))?;
        }
        Command::MapApply {
            map,
            db,
            out,
            data,
            data_out,
        } => {
            let m = FieldTranslationMap::load(&map)?;
            let source = Database::load(&db)?;
            for c in detect_collisions(&infer_schema(&source), &m) {
                log::warn!("collision: {c}");
            }
            apply_map(&source, &m)?.dump(&out)?;
            if let Some(data) = data {
                let mut rows = records(&data)?;
                for (i, r) in rows.iter_mut().enumerate() {
                    let q = parse(&r.query).with_context(|| {
                        format!("{}: line {} gold query", data.display(), i + 1)
                    })?;
                    r.query = apply_map_query(&q, &m)
                        .with_context(|| format!("line {}", i + 1))?
                        .to_string();
                    if let Some(t) = m.target_language {
                        r.language = t;
                    }
                }
                write_out(data_out.as_deref(), &to_jsonl(&rows))?;
            }
        }
        Command::MapCheck { map, db } => {
            let m = FieldTranslationMap::load(&map)?;
            let found = detect_collisions(&infer_schema(&Database::load(&db)?), &m);
            for c in &found {
                eprintln!("warning: {c}");
            }
            if !found.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Split {
            data,
            ratio,
            seed,
            train_out,
            test_out,
        } => {
            let (train, test) = split_dataset(&records(&data)?, ratio, seed)?;
            write_jsonl(&train_out, &train)?;
            write_jsonl(&test_out, &test)?;
            let dbs = |xs: &[DatasetRecord]| {
                xs.iter()
                    .map(|r| r.db_id.as_str())
                    .collect::<std::collections::BTreeSet<_>>()
                    .len()
            };
            emit(&format!(
                "{}\n",
                serde_json::json!({
                    "train": {"items": train.len(), "databases": dbs(&train)},
                    "test": {"items": test.len(), "databases": dbs(&test)},
                })
            ))?;
        }
        Command::IndexBuild { data, out, config } => {
            let embedder = match config {
                Some(c) => load_config(&c)?.embedder()?,
                None => Box::new(HashingEmbedder::default()),
            };
            let pairs: Vec<_> = records(&data)?.iter().map(DatasetRecord::example).collect();
            let set = build_index(&pairs, embedder.as_ref())?;
            save_index_set(&set, &out)?;
            for (lang, ix) in &set {
                eprintln!("{lang}: {} entries", ix.len());
            }
        }
        Command::Retrieve {
            index,
            text,
            k,
            threshold,
            language,
            config,
        } => {
            let embedder = match config {
                Some(c) => load_config(&c)?.embedder()?,
                None => Box::new(HashingEmbedder::default()),
            };
            let language = match language {
                Some(l) => l,
                None => classify_language(&text)?,
            };
            let path = index.join(format!("{}.json", language.code()));
            let ix = VectorIndex::load(&path)?;
            let hits = retrieve(&ix, embedder.as_ref(), &text, k, threshold)?;
            let rows: Vec<_> = hits
                .iter()
                .map(|h| serde_json::json!({"similarity": h.similarity, "nlq": h.pair.nlq, "query": h.pair.query_text, "db_id": h.pair.db_id}))
                .collect();
            emit(&format!("{}\n", serde_json::to_string_pretty(&rows)?))?;
        }
        Command::Run {
            config,
            data,
            out,
            transcript,
            dbs,
            parallelism,
        } => {
            let mut c = load_config(&config)?;
            if let Some(p) = parallelism {
                c.parallelism = p;
            }
            c.validate()?;
            let items = records(&data)?;
            let dbs = catalog(dbs, &c)?;
            let indices: IndexSet = match &c.index {
                Some(dir) => load_index_set(dir)?,
                None => {
                    log::warn!("no `index` in the config; generation prompts get no examples");
                    IndexSet::new()
                }
            };
            let providers = ProviderSet::from_config(&c, &items, &dbs)?;
            let templates = c.templates()?;
            let embedder = c.embedder()?;
            let pipeline = Pipeline::new(c, templates, providers, dbs, indices, embedder);
            let outputs = pipeline.run_all(&items)?;
            let preds: Vec<_> = outputs.iter().map(|o| &o.prediction).collect();
            write_jsonl(&out, &preds)?;
            if let Some(t) = transcript {
                let calls: Vec<_> = outputs.iter().flat_map(|o| &o.transcript).collect();
                write_jsonl(&t, &calls)?;
            }
            let failed = outputs
                .iter()
                .filter(|o| !o.prediction.trace.errors.is_empty())
                .count();
            eprintln!("{} items, {failed} with step errors", outputs.len());
        }
        Command::Augment {
            config,
            data,
            out,
            rejections,
            dbs,
        } => {
            let c = load_config(&config)?;
            let sources = records(&data)?;
            let dbs = catalog(dbs, &c)?;
            let providers = ProviderSet::from_config(&c, &sources, &dbs)?;
            let Some(provider) = providers.get(Role::Augmenter) else {
                bail!("no provider for the augmenter role: set [providers.augmenter] or [providers.default]");
            };
            let settings = AugmentSettings {
                count: c.augment.count,
                paraphrases: c.augment.paraphrases,
                languages: c.augment.languages.clone(),
                params: c.params(Role::Augmenter),
            };
            let outcome = augment(
                &sources,
                &dbs,
                provider.as_ref(),
                &c.templates()?,
                &settings,
            )?;
            write_jsonl(&out, &outcome.pairs)?;
            if let Some(r) = rejections {
                write_jsonl(&r, &outcome.rejections)?;
            }
            eprintln!(
                "{} pairs accepted, {} candidates rejected",
                outcome.pairs.len(),
                outcome.rejections.len()
            );
        }
        Command::ExportCorpora { dbs, data, out } => {
            let dbs = load_catalog(&dbs)?;
            let rows = records(&data)?;
            let c = build_corpora(&rows, &dbs, &polynosql::pipeline::Templates::builtin());
            fs::create_dir_all(&out)?;
            write_jsonl(&out.join("sketch.jsonl"), &c.sketch)?;
            write_jsonl(&out.join("links.jsonl"), &c.links)?;
            for i in &c.skipped {
                log::warn!(
                    "record {} skipped: unknown database or unparseable gold query",
                    i + 1
                );
            }
            eprintln!(
                "{} sketch lines, {} link lines",
                c.sketch.len(),
                c.links.len()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
