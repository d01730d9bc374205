use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use super::prompt::{TemplateError, Templates};
use super::provider::{ChatProvider, DecodingParams, EchoGoldProvider, FixedProvider, Role};
use crate::dataset::{Catalog, DatasetRecord};
use crate::retrieval::{
    Embedder, HashingEmbedder, Language, DEFAULT_DIMENSION, DEFAULT_K, DEFAULT_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Gold answers from the dataset being run; for tests and dry runs.
    Echo,
    /// A constant reply, inline or read from a file.
    Fixed {
        #[serde(default)]
        text: Option<String>,
        #[serde(default)]
        file: Option<PathBuf>,
    },
    /// An OpenAI-compatible chat endpoint.
    Openai {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Openai {
        base_url: String,
        model: String,
        dimension: usize,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashing {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub count: usize,
    pub paraphrases: usize,
    pub languages: Vec<Language>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            count: 3,
            paraphrases: 2,
            languages: Language::ALL.to_vec(),
        }
    }
}

/// Pipeline settings, read from TOML. Relative paths are resolved against
/// the config file's directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k: usize,
    pub threshold: f64,
    pub temperature: f64,
    /// Nucleus sampling for the sketch and linking roles.
    pub slm_top_p: Option<f64>,
    pub slm_max_tokens: Option<u32>,
    pub max_repair_retries: u32,
    pub parallelism: usize,
    /// Built-in template set; only `v1` exists.
    pub template: String,
    pub template_dir: Option<PathBuf>,
    pub dbs: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub embedder: EmbedderConfig,
    /// Keyed by role name, with `default` as the fallback.
    pub providers: BTreeMap<String, ProviderConfig>,
    pub augment: AugmentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            temperature: 0.0,
            slm_top_p: Some(0.7),
            slm_max_tokens: Some(512),
            max_repair_retries: 1,
            parallelism: 4,
            template: "v1".into(),
            template_dir: None,
            dbs: None,
            index: None,
            embedder: EmbedderConfig::default(),
            providers: BTreeMap::new(),
            augment: AugmentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut c.template_dir);
        resolve(&mut c.dbs);
        resolve(&mut c.index);
        for pc in c.providers.values_mut() {
            if let ProviderConfig::Fixed { file, .. } = pc {
                resolve(file);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} is outside [0, 1]", self.threshold));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad(format!("temperature {} is negative", self.temperature));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.template != "v1" && self.template_dir.is_none() {
            return bad(format!("unknown template set `{}`", self.template));
        }
        for key in self.providers.keys() {
            if key != "default" && !Role::ALL.iter().any(|r| r.name() == key) {
                return bad(format!("unknown provider role `{key}`"));
            }
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<Templates, ConfigError> {
        Ok(match &self.template_dir {
            Some(dir) => Templates::load(dir)?,
            None => Templates::builtin(),
        })
    }

    pub fn params(&self, role: Role) -> DecodingParams {
        let slm = matches!(role, Role::Sketch | Role::Linker);
        DecodingParams {
            temperature: self.temperature,
            top_p: if slm { self.slm_top_p } else { None },
            max_tokens: if slm { self.slm_max_tokens } else { None },
        }
    }

    pub fn provider_config(&self, role: Role) -> Option<&ProviderConfig> {
        self.providers
            .get(role.name())
            .or_else(|| self.providers.get("default"))
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>, ConfigError> {
        match &self.embedder {
            EmbedderConfig::Hashing { dimension } => Ok(Box::new(HashingEmbedder {
                dimension: *dimension,
            })),
            #[cfg(feature = "http")]
            EmbedderConfig::Openai {
                base_url,
                model,
                dimension,
                api_key_env,
                timeout_secs,
            } => Ok(Box::new(
                super::http::OpenAiEmbedder::new(
                    base_url,
                    model,
                    *dimension,
                    api_key_env.as_deref(),
                    std::time::Duration::from_secs(*timeout_secs),
                )
                .map_err(ConfigError::Invalid)?,
            )),
            #[cfg(not(feature = "http"))]
            EmbedderConfig::Openai { .. } => Err(ConfigError::Invalid(
                "this build has no HTTP support (enable the `http` feature)".into(),
            )),
        }
    }
}

/// One provider per role.
#[derive(Clone, Default)]
pub struct ProviderSet {
    by_role: HashMap<Role, Arc<dyn ChatProvider>>,
}

impl ProviderSet {
    pub fn uniform(p: Arc<dyn ChatProvider>) -> Self {
        ProviderSet {
            by_role: Role::ALL.iter().map(|r| (*r, p.clone())).collect(),
        }
    }

    pub fn with(mut self, role: Role, p: Arc<dyn ChatProvider>) -> Self {
        self.by_role.insert(role, p);
        self
    }

    pub fn get(&self, role: Role) -> Option<&Arc<dyn ChatProvider>> {
        self.by_role.get(&role)
    }

    /// Builds the configured providers. `records` and `dbs` feed the echo
    /// provider.
    pub fn from_config(
        c: &PipelineConfig,
        records: &[DatasetRecord],
        dbs: &Catalog,
    ) -> Result<Self, ConfigError> {
        let mut set = ProviderSet::default();
        let mut echo: Option<Arc<dyn ChatProvider>> = None;
        for role in Role::ALL {
            let Some(pc) = c.provider_config(role) else {
                continue;
            };
            let p: Arc<dyn ChatProvider> = match pc {
                ProviderConfig::Echo => echo
                    .get_or_insert_with(|| Arc::new(EchoGoldProvider::new(records, dbs)))
                    .clone(),
                ProviderConfig::Fixed { text, file } => {
                    let text = match (text, file) {
                        (Some(t), None) => t.clone(),
                        (None, Some(f)) => {
                            std::fs::read_to_string(f).map_err(|e| ConfigError::Io {
                                path: f.clone(),
                                message: e.to_string(),
                            })?
                        }
                        _ => {
                            return Err(ConfigError::Invalid(
                                "fixed provider needs exactly one of `text` or `file`".into(),
                            ))
                        }
                    };
                    Arc::new(FixedProvider(text))
                }
                #[cfg(feature = "http")]
                ProviderConfig::Openai {
                    base_url,
                    model,
                    api_key_env,
                    timeout_secs,
                } => Arc::new(
                    super::http::OpenAiChat::new(
                        base_url,
                        model,
                        api_key_env.as_deref(),
                        std::time::Duration::from_secs(*timeout_secs),
                    )
                    .map_err(ConfigError::Invalid)?,
                ),
                #[cfg(not(feature = "http"))]
                ProviderConfig::Openai { .. } => {
                    return Err(ConfigError::Invalid(
                        "this build has no HTTP support (enable the `http` feature)".into(),
                    ))
                }
            };
            set.by_role.insert(role, p);
        }
        Ok(set)
    }
}
