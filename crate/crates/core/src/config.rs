//! Run configuration: one TOML file in which every section is optional.
//! Relative paths are taken from the directory of the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bm25::Bm25Params;
use crate::corpus::Corpus;
use crate::embedding::{
    embed_corpus, EmbedError, EmbeddingProvider, HashEmbedder, TextVectorProvider, VectorStore,
    DEFAULT_HASH_DIMENSION,
};
use crate::eval::{BaselineParams, ScorerSpec};
use crate::pipeline::ArmParams;
use crate::prompts::{PromptError, Prompts};

pub const DEFAULT_CHUNK_UNITS: usize = 20;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid setting `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Seeded feature hashing of tokens.
    #[default]
    Hash,
    /// Precomputed vectors read from JSONL files.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Hash provider only.
    pub dimension: usize,
    /// File provider: `{"text", "vector"}` lines used for questions and any
    /// text not covered by `chunk_vectors`.
    pub vectors: Option<String>,
    /// File provider: `{"chunk_id", "vector"}` lines, one per corpus chunk.
    pub chunk_vectors: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Hash,
            dimension: DEFAULT_HASH_DIMENSION,
            vectors: None,
            chunk_vectors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: Option<String>,
    pub index: Option<String>,
    /// Seeds the hash provider.
    pub seed: u64,
    /// Questions evaluated in parallel.
    pub jobs: usize,
    pub chunk_units: usize,
    pub provider: ProviderConfig,
    pub arm: ArmParams,
    pub bm25: Bm25Params,
    pub baseline: BaselineParams,
    pub scorer: ScorerSpec,
    /// Template name to file path.
    pub prompts: BTreeMap<String, String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            corpus: None,
            index: None,
            seed: 0,
            jobs: 1,
            chunk_units: DEFAULT_CHUNK_UNITS,
            provider: ProviderConfig::default(),
            arm: ArmParams::default(),
            bm25: Bm25Params::default(),
            baseline: BaselineParams::default(),
            scorer: ScorerSpec::default(),
            prompts: BTreeMap::new(),
            base_dir: PathBuf::from("."),
        }
    }
}

fn invalid(field: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn unit_interval(field: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, "must lie in [0, 1]"))
    }
}

fn positive(field: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(field, "must be at least 1"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, "must be finite and non-negative"))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parse and validate TOML text whose relative paths start at `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<text>"),
            message: e.to_string(),
        })?;
        config.base_dir = base.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.arm;
        unit_interval("arm.alpha", a.alpha)?;
        unit_interval("arm.compat_weight", a.compat_weight)?;
        unit_interval("arm.lambda", a.lambda)?;
        positive("arm.base_size", a.base_size)?;
        positive("arm.mip_k", a.mip_k)?;
        positive("arm.final_k", a.final_k)?;
        positive("arm.beam_width", a.beam_width)?;
        positive("arm.max_ngrams", a.max_ngrams)?;
        positive("arm.max_keywords", a.max_keywords)?;
        if a.strategies.is_empty() {
            return Err(invalid("arm.strategies", "needs at least one strategy"));
        }
        for s in &a.strategies {
            positive("arm.strategies.per_step", s.per_step)?;
            positive("arm.strategies.steps", s.steps)?;
        }
        non_negative("bm25.k1", self.bm25.k1)?;
        unit_interval("bm25.b", self.bm25.b)?;
        let b = &self.baseline;
        positive("baseline.top_k", b.top_k)?;
        positive("baseline.rerank_pool", b.rerank_pool)?;
        positive("baseline.per_sub", b.per_sub)?;
        positive("baseline.max_iterations", b.max_iterations)?;
        positive("baseline.per_search", b.per_search)?;
        positive("jobs", self.jobs)?;
        positive("chunk_units", self.chunk_units)?;
        match self.provider.kind {
            ProviderKind::Hash => positive("provider.dimension", self.provider.dimension)?,
            ProviderKind::File => {
                if self.provider.vectors.is_none() {
                    return Err(invalid("provider.vectors", "required by the file provider"));
                }
            }
        }
        if let ScorerSpec::Echo {
            stop_bias,
            focus_weight,
            salience_weight,
            ..
        } = self.scorer
        {
            if !stop_bias.is_finite() {
                return Err(invalid("scorer.stop_bias", "must be finite"));
            }
            non_negative("scorer.focus_weight", focus_weight)?;
            non_negative("scorer.salience_weight", salience_weight)?;
        }
        Ok(())
    }

    /// `path` relative to the config file.
    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        Ok(match self.provider.kind {
            ProviderKind::Hash => Box::new(HashEmbedder::new(self.provider.dimension, self.seed)),
            ProviderKind::File => {
                let path = self
                    .provider
                    .vectors
                    .as_deref()
                    .ok_or_else(|| invalid("provider.vectors", "required by the file provider"))?;
                Box::new(TextVectorProvider::load(&self.resolve(path))?)
            }
        })
    }

    /// Chunk vectors: read from `chunk_vectors` when set, else embedded.
    pub fn vector_store(&self, provider: &dyn EmbeddingProvider, corpus: &Corpus) -> Result<VectorStore, ConfigError> {
        Ok(match (&self.provider.kind, &self.provider.chunk_vectors) {
            (ProviderKind::File, Some(path)) => VectorStore::load(&self.resolve(path), corpus)?,
            _ => embed_corpus(provider, corpus)?,
        })
    }

    pub fn prompts(&self) -> Result<Prompts, ConfigError> {
        Ok(Prompts::load(&self.prompts, &self.base_dir)?)
    }
}
