//! Model gateway: a uniform interface over generative and embedding models.
//!
//! Two backends are provided. [`MockBackend`] answers from a JSON Lines script
//! and is fully deterministic; [`HttpGateway`] talks to any server exposing the
//! OpenAI-compatible `/v1/chat/completions` and `/v1/embeddings` endpoints.
//!
//! Every generation carries per-token top-k candidate log-probabilities. A
//! backend that cannot supply them fails with
//! [`GatewayError::LogprobsUnsupported`] instead of returning a degraded result.

mod cache;
mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::EmbeddingCache;
pub use http::{Endpoint, HttpGateway, RetryPolicy, API_KEY_ENV};
pub use mock::{MockBackend, MOCK_EMBEDDING_DIM};

pub const DEFAULT_LOGPROB_TOP_K: u32 = 10;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend did not return candidate logprobs: {0}")]
    LogprobsUnsupported(String),
    #[error("mock script has no {kind} entry matching {input:?}")]
    ScriptMiss { kind: &'static str, input: String },
    #[error("embedding input is empty")]
    EmptyInput,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("mock script line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("reading mock script: {0}")]
    Io(#[from] std::io::Error),
}

/// Model id and decoding parameters shared by every call a pipeline stage makes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub logprob_top_k: u32,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            model_id: String::new(),
            temperature: 0.0,
            max_tokens: 256,
            logprob_top_k: DEFAULT_LOGPROB_TOP_K,
        }
    }
}

impl GenerationSettings {
    pub fn request(&self, prompt: impl Into<String>) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            logprob_top_k: self.logprob_top_k,
            model_id: self.model_id.clone(),
        }
    }

    pub fn with_max_tokens(&self, max_tokens: u32) -> Self {
        Self {
            max_tokens,
            ..self.clone()
        }
    }
}

/// A single generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub logprob_top_k: u32,
    pub model_id: String,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 256,
            logprob_top_k: DEFAULT_LOGPROB_TOP_K,
            model_id: model_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.logprob_top_k == 0 {
            return Err(GatewayError::InvalidRequest("logprob_top_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCandidate {
    pub token: String,
    pub logprob: f64,
}

/// One generated position: the emitted token, its logprob and the top-k
/// alternatives the backend reported for that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPosition {
    pub token: String,
    pub logprob: f64,
    pub candidates: Vec<TokenCandidate>,
}

/// Per-position candidate log-probabilities for a generated sequence.
///
/// Construction through [`TokenLogprobs::new`] enforces that every logprob is
/// finite and `<= 0` and that no position has an empty candidate list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenLogprobs {
    positions: Vec<TokenPosition>,
}

impl TokenLogprobs {
    pub fn new(positions: Vec<TokenPosition>) -> Result<Self, String> {
        for (t, pos) in positions.iter().enumerate() {
            if pos.candidates.is_empty() {
                return Err(format!("position {}: empty candidate list", t + 1));
            }
            check_logprob(pos.logprob).map_err(|e| format!("position {}: {e}", t + 1))?;
            for c in &pos.candidates {
                check_logprob(c.logprob).map_err(|e| format!("position {} candidate {:?}: {e}", t + 1, c.token))?;
            }
        }
        Ok(Self { positions })
    }

    /// Builds a sequence in which every position is certain: one candidate
    /// with logprob 0.
    pub fn deterministic<S: AsRef<str>>(tokens: &[S]) -> Self {
        Self {
            positions: tokens
                .iter()
                .map(|t| TokenPosition {
                    token: t.as_ref().to_string(),
                    logprob: 0.0,
                    candidates: vec![TokenCandidate {
                        token: t.as_ref().to_string(),
                        logprob: 0.0,
                    }],
                })
                .collect(),
        }
    }

    pub fn positions(&self) -> &[TokenPosition] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Concatenation of the chosen tokens.
    pub fn text(&self) -> String {
        self.positions.iter().map(|p| p.token.as_str()).collect()
    }

    pub fn max_candidates(&self) -> usize {
        self.positions.iter().map(|p| p.candidates.len()).max().unwrap_or(0)
    }
}

fn check_logprob(lp: f64) -> Result<(), String> {
    if !lp.is_finite() {
        return Err(format!("logprob {lp} is not finite"));
    }
    if lp > 0.0 {
        return Err(format!("logprob {lp} is positive"));
    }
    Ok(())
}

/// Output of [`ModelGateway::generate`].
///
/// For both shipped backends `tokens.text() == text`: the mock synthesizes
/// whitespace-attached tokens, and OpenAI-compatible servers return token
/// strings that concatenate to the message content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub tokens: TokenLogprobs,
    pub model_id: String,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Cosine similarity; zero vectors compare as 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// A generative + embedding model backend. Implementations must be shareable
/// across threads and must not mutate shared state after construction.
pub trait ModelGateway: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError>;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

impl<G: ModelGateway + ?Sized> ModelGateway for &G {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        (**self).generate(req)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        (**self).embed(texts)
    }
}

impl<G: ModelGateway + ?Sized> ModelGateway for std::sync::Arc<G> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        (**self).generate(req)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        (**self).embed(texts)
    }
}

pub(crate) fn check_embed_input(texts: &[String]) -> Result<(), GatewayError> {
    if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
        return Err(GatewayError::EmptyInput);
    }
    Ok(())
}
