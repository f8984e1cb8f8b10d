//! Pipeline configuration.
//!
//! The config file is flat TOML, one key per setting:
//!
//! ```toml
//! model_url = "http://localhost:8000"
//! model_id = "gpt-4o-mini"
//! embed_url = "http://localhost:8001"
//! embed_model = "all-MiniLM-L6-v2"
//! alpha = 0.5
//! beta = 0.5
//! k = 10
//! paths_k = 10
//! tau = 1.0
//! fallback = "top_delta"
//! temperature = 0.0
//! logprob_top_k = 10
//! max_answer_tokens = 64
//! max_extraction_tokens = 2048
//! max_segment_tokens = 256
//! mode = "full"
//! parallelism = 4
//! trace = false
//! ```
//!
//! Every key can be overridden from the command line. When `tau` is set
//! nowhere, it defaults per model (see [`default_tau_for_model`]).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{default_tau_for_model, FallbackPolicy, ResolutionConfig};
use crate::gateway::{GenerationSettings, DEFAULT_LOGPROB_TOP_K};
use crate::graph::DEFAULT_MAX_SEGMENT_TOKENS;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

/// Which stages of the pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Graph, path retrieval and entropy filtering.
    #[default]
    Full,
    /// Entropy filtering over raw-context chunks instead of graph paths.
    NoKg,
    /// Graph paths used directly, no entropy filtering.
    NoConflict,
    /// Answer from the raw retrieved context.
    StandardRag,
    /// Answer from the model's own knowledge.
    NoRag,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Full, Mode::NoKg, Mode::NoConflict, Mode::StandardRag, Mode::NoRag];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoKg => "no_kg",
            Mode::NoConflict => "no_conflict",
            Mode::StandardRag => "standard_rag",
            Mode::NoRag => "no_rag",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('-', "_");
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            format!("unknown mode {s:?} (expected one of full, no_kg, no_conflict, standard_rag, no_rag)")
        })
    }
}

fn parse_fallback(s: &str) -> Result<FallbackPolicy, String> {
    match s.replace('-', "_").as_str() {
        "top_delta" => Ok(FallbackPolicy::TopDelta),
        "raw_context" => Ok(FallbackPolicy::RawContext),
        other => Err(format!(
            "unknown fallback {other:?} (expected top_delta or raw_context)"
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub url: Option<String>,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model: ModelSpec,
    pub embedding: ModelSpec,
    pub retrieval: RetrievalConfig,
    pub tau: f64,
    pub fallback: FallbackPolicy,
    pub temperature: f64,
    pub logprob_top_k: u32,
    pub max_answer_tokens: u32,
    pub max_extraction_tokens: u32,
    pub max_segment_tokens: usize,
    pub mode: Mode,
    pub parallelism: usize,
    pub trace: bool,
}

pub const DEFAULT_MODEL_ID: &str = "gpt-4o-mini";
pub const DEFAULT_EMBED_MODEL: &str = "all-MiniLM-L6-v2";

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec {
                url: None,
                model_id: DEFAULT_MODEL_ID.into(),
            },
            embedding: ModelSpec {
                url: None,
                model_id: DEFAULT_EMBED_MODEL.into(),
            },
            retrieval: RetrievalConfig::default(),
            tau: default_tau_for_model(DEFAULT_MODEL_ID),
            fallback: FallbackPolicy::TopDelta,
            temperature: 0.0,
            logprob_top_k: DEFAULT_LOGPROB_TOP_K,
            max_answer_tokens: 64,
            max_extraction_tokens: 2048,
            max_segment_tokens: DEFAULT_MAX_SEGMENT_TOKENS,
            mode: Mode::Full,
            parallelism: 4,
            trace: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retrieval
            .validate()
            .map_err(|(field, msg)| invalid(format!("retrieval.{field}"), msg))?;
        if !self.tau.is_finite() {
            return Err(invalid("tau", "must be finite"));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(invalid(
                "temperature",
                format!("must be a finite value >= 0, got {}", self.temperature),
            ));
        }
        let positive = [
            ("logprob_top_k", self.logprob_top_k as usize),
            ("max_answer_tokens", self.max_answer_tokens as usize),
            ("max_extraction_tokens", self.max_extraction_tokens as usize),
            ("max_segment_tokens", self.max_segment_tokens),
            ("parallelism", self.parallelism),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.model.model_id.trim().is_empty() {
            return Err(invalid("model.model_id", "must not be empty"));
        }
        Ok(())
    }

    pub fn answer_settings(&self) -> GenerationSettings {
        GenerationSettings {
            model_id: self.model.model_id.clone(),
            temperature: self.temperature,
            max_tokens: self.max_answer_tokens,
            logprob_top_k: self.logprob_top_k,
        }
    }

    pub fn extraction_settings(&self) -> GenerationSettings {
        self.answer_settings().with_max_tokens(self.max_extraction_tokens)
    }

    pub fn resolution(&self) -> ResolutionConfig {
        ResolutionConfig {
            tau: self.tau,
            fallback: self.fallback,
            answer: self.answer_settings(),
        }
    }
}

/// Values given on the command line; `None` leaves the file/default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub model_url: Option<String>,
    pub model_id: Option<String>,
    pub embed_url: Option<String>,
    pub embed_model: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub paths_k: Option<usize>,
    pub tau: Option<f64>,
    pub fallback: Option<String>,
    pub temperature: Option<f64>,
    pub logprob_top_k: Option<u32>,
    pub max_answer_tokens: Option<u32>,
    pub max_extraction_tokens: Option<u32>,
    pub max_segment_tokens: Option<usize>,
    pub mode: Option<String>,
    pub parallelism: Option<usize>,
    pub trace: Option<bool>,
}

fn as_f64(field: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(invalid(field, format!("expected a number, got {}", other.type_str()))),
    }
}

fn as_count<T: TryFrom<i64>>(field: &str, v: &toml::Value) -> Result<T, ConfigError> {
    match v {
        toml::Value::Integer(i) => {
            T::try_from(*i).map_err(|_| invalid(field, format!("expected a non-negative integer, got {i}")))
        }
        other => Err(invalid(field, format!("expected an integer, got {}", other.type_str()))),
    }
}

fn as_str<'v>(field: &str, v: &'v toml::Value) -> Result<&'v str, ConfigError> {
    v.as_str()
        .ok_or_else(|| invalid(field, format!("expected a string, got {}", v.type_str())))
}

fn as_bool(field: &str, v: &toml::Value) -> Result<bool, ConfigError> {
    v.as_bool()
        .ok_or_else(|| invalid(field, format!("expected a boolean, got {}", v.type_str())))
}

/// Fills `overrides` from a flat TOML document, rejecting unknown keys.
pub fn parse_config_str(text: &str) -> Result<ConfigOverrides, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| invalid("config", e.to_string()))?;
    let mut o = ConfigOverrides::default();
    for (key, v) in &table {
        let k = key.as_str();
        match k {
            "model_url" => o.model_url = Some(as_str(k, v)?.to_string()),
            "model_id" => o.model_id = Some(as_str(k, v)?.to_string()),
            "embed_url" => o.embed_url = Some(as_str(k, v)?.to_string()),
            "embed_model" => o.embed_model = Some(as_str(k, v)?.to_string()),
            "alpha" => o.alpha = Some(as_f64(k, v)?),
            "beta" => o.beta = Some(as_f64(k, v)?),
            "k" => o.k = Some(as_count(k, v)?),
            "paths_k" => o.paths_k = Some(as_count(k, v)?),
            "tau" => o.tau = Some(as_f64(k, v)?),
            "fallback" => o.fallback = Some(as_str(k, v)?.to_string()),
            "temperature" => o.temperature = Some(as_f64(k, v)?),
            "logprob_top_k" => o.logprob_top_k = Some(as_count(k, v)?),
            "max_answer_tokens" => o.max_answer_tokens = Some(as_count(k, v)?),
            "max_extraction_tokens" => o.max_extraction_tokens = Some(as_count(k, v)?),
            "max_segment_tokens" => o.max_segment_tokens = Some(as_count(k, v)?),
            "mode" => o.mode = Some(as_str(k, v)?.to_string()),
            "parallelism" => o.parallelism = Some(as_count(k, v)?),
            "trace" => o.trace = Some(as_bool(k, v)?),
            other => return Err(invalid(other, "unknown config key")),
        }
    }
    Ok(o)
}

impl ConfigOverrides {
    /// Layers `self` over `base`: values set here win.
    pub fn or(self, base: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            model_url: self.model_url.or(base.model_url),
            model_id: self.model_id.or(base.model_id),
            embed_url: self.embed_url.or(base.embed_url),
            embed_model: self.embed_model.or(base.embed_model),
            alpha: self.alpha.or(base.alpha),
            beta: self.beta.or(base.beta),
            k: self.k.or(base.k),
            paths_k: self.paths_k.or(base.paths_k),
            tau: self.tau.or(base.tau),
            fallback: self.fallback.or(base.fallback),
            temperature: self.temperature.or(base.temperature),
            logprob_top_k: self.logprob_top_k.or(base.logprob_top_k),
            max_answer_tokens: self.max_answer_tokens.or(base.max_answer_tokens),
            max_extraction_tokens: self.max_extraction_tokens.or(base.max_extraction_tokens),
            max_segment_tokens: self.max_segment_tokens.or(base.max_segment_tokens),
            mode: self.mode.or(base.mode),
            parallelism: self.parallelism.or(base.parallelism),
            trace: self.trace.or(base.trace),
        }
    }

    /// Applies the settings to the defaults and validates the result.
    pub fn into_config(self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = PipelineConfig::default();
        if let Some(v) = self.model_url {
            cfg.model.url = Some(v);
        }
        if let Some(v) = self.model_id {
            cfg.model.model_id = v;
        }
        if let Some(v) = self.embed_url {
            cfg.embedding.url = Some(v);
        }
        if let Some(v) = self.embed_model {
            cfg.embedding.model_id = v;
        }
        cfg.retrieval.alpha = self.alpha.unwrap_or(cfg.retrieval.alpha);
        cfg.retrieval.beta = self.beta.unwrap_or(cfg.retrieval.beta);
        cfg.retrieval.k_similar = self.k.unwrap_or(cfg.retrieval.k_similar);
        cfg.retrieval.paths_k = self.paths_k.unwrap_or(cfg.retrieval.paths_k);
        cfg.tau = self.tau.unwrap_or_else(|| default_tau_for_model(&cfg.model.model_id));
        if let Some(f) = self.fallback {
            cfg.fallback = parse_fallback(&f).map_err(|m| invalid("fallback", m))?;
        }
        cfg.temperature = self.temperature.unwrap_or(cfg.temperature);
        cfg.logprob_top_k = self.logprob_top_k.unwrap_or(cfg.logprob_top_k);
        cfg.max_answer_tokens = self.max_answer_tokens.unwrap_or(cfg.max_answer_tokens);
        cfg.max_extraction_tokens = self.max_extraction_tokens.unwrap_or(cfg.max_extraction_tokens);
        cfg.max_segment_tokens = self.max_segment_tokens.unwrap_or(cfg.max_segment_tokens);
        if let Some(m) = self.mode {
            cfg.mode = m.parse().map_err(|e: String| invalid("mode", e))?;
        }
        cfg.parallelism = self.parallelism.unwrap_or(cfg.parallelism);
        cfg.trace = self.trace.unwrap_or(cfg.trace);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads the optional config file, layers the command-line overrides on top
/// and validates.
pub fn parse_config(path: Option<&Path>, overrides: ConfigOverrides) -> Result<PipelineConfig, ConfigError> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_config_str(&text)?
        }
        None => ConfigOverrides::default(),
    };
    overrides.or(file).into_config()
}
