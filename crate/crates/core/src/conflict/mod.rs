//! Entropy-based conflict detection and corrective generation.
//!
//! The model first answers from its own knowledge; the mean token entropy of
//! that answer is the baseline. Each candidate context is then supplied on its
//! own and the entropy of the resulting answer is compared to the baseline.
//! Contexts that raise entropy by more than `tau` bits challenge what the
//! model believes and are kept as corrective context for the final answer.

mod entropy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, GenerationSettings, ModelGateway, TokenLogprobs};
use crate::prompts;
use crate::retrieval::ReasoningPath;

pub use entropy::{mean_token_entropy, position_entropy};

pub const DEFAULT_TAU: f64 = 1.0;

/// Line placed between concatenated corrective contexts.
pub const CONTEXT_DELIMITER: &str = "\n---\n";

#[derive(Debug, Error)]
pub enum ConflictError {
    #[error("answer has no generated tokens to measure")]
    EmptySequence,
    #[error("path {0} has no rendered context")]
    MissingContext(usize),
    #[error("no corrective paths, no candidate paths and no raw context to fall back on")]
    FallbackExhausted,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// What to answer from when no path clears the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    /// The single path with the largest entropy increase.
    #[default]
    TopDelta,
    /// The raw retrieved context (falls back to `TopDelta` if none is given).
    RawContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackUsed {
    None,
    TopDelta,
    RawContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionConfig {
    pub tau: f64,
    pub fallback: FallbackPolicy,
    pub answer: GenerationSettings,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            fallback: FallbackPolicy::TopDelta,
            answer: GenerationSettings::default(),
        }
    }
}

/// Thresholds used when no tau is configured: 3 for Qwen2.5-7B, 1 otherwise.
pub fn default_tau_for_model(model_id: &str) -> f64 {
    let id = model_id.to_lowercase();
    if id.contains("qwen2.5-7b") {
        3.0
    } else {
        DEFAULT_TAU
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntropy {
    pub index: usize,
    pub h_aug: f64,
    pub delta_h: f64,
    pub corrective: bool,
}

/// Audit record of one conflict-resolution round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h_param: f64,
    pub per_path: Vec<PathEntropy>,
    pub tau: f64,
    pub parametric_answer: String,
    pub augmented_answers: Vec<String>,
}

impl EntropyReport {
    /// Indices of the corrective entries, in order.
    pub fn corrective_indices(&self) -> Vec<usize> {
        self.per_path.iter().filter(|p| p.corrective).map(|p| p.index).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.per_path.iter().map(|p| p.delta_h).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerEntropy {
    pub answer: String,
    pub entropy: f64,
    pub tokens: TokenLogprobs,
}

fn measured(
    prompt: String,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
) -> Result<AnswerEntropy, ConflictError> {
    let out = gateway.generate(&settings.request(prompt))?;
    let entropy = mean_token_entropy(&out.tokens)?;
    Ok(AnswerEntropy {
        answer: out.text.trim().to_string(),
        entropy,
        tokens: out.tokens,
    })
}

/// Answer and entropy with no context at all.
pub fn parametric_baseline(
    query: &str,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
) -> Result<AnswerEntropy, ConflictError> {
    measured(prompts::answer_parametric(query), gateway, settings)
}

/// Answer and entropy with `context` prepended to the query.
pub fn context_entropy(
    query: &str,
    context: &str,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
) -> Result<AnswerEntropy, ConflictError> {
    measured(prompts::answer_augmented(query, context), gateway, settings)
}

/// Answer and entropy with one rendered reasoning path as context.
pub fn augmented_entropy(
    query: &str,
    path: &ReasoningPath,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
) -> Result<AnswerEntropy, ConflictError> {
    let context = path
        .rendered_context
        .as_deref()
        .ok_or(ConflictError::MissingContext(0))?;
    context_entropy(query, context, gateway, settings)
}

/// Indices whose entropy increase is strictly greater than `tau`.
pub fn filter_corrective(deltas: &[f64], tau: f64) -> Vec<usize> {
    deltas
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > tau)
        .map(|(i, _)| i)
        .collect()
}

/// Outcome of resolving over plain context strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextResolution {
    pub response: String,
    /// The context the final answer was generated from.
    pub processed_context: String,
    /// Candidate indices that went into `processed_context` (empty for a
    /// raw-context fallback).
    pub used: Vec<usize>,
    pub fallback_used: FallbackUsed,
    pub report: EntropyReport,
    /// Log-probabilities of the final answer.
    pub response_tokens: TokenLogprobs,
}

/// Runs the baseline, measures every candidate context concurrently, keeps
/// the corrective ones and answers from them (or from the fallback).
pub fn resolve_contexts(
    query: &str,
    contexts: &[String],
    raw_context: Option<&str>,
    gateway: &dyn ModelGateway,
    cfg: &ResolutionConfig,
) -> Result<ContextResolution, ConflictError> {
    let raw_context = raw_context.filter(|c| !c.trim().is_empty());
    if contexts.is_empty() && raw_context.is_none() {
        return Err(ConflictError::FallbackExhausted);
    }

    let baseline = parametric_baseline(query, gateway, &cfg.answer)?;
    let augmented: Vec<AnswerEntropy> = contexts
        .par_iter()
        .map(|c| context_entropy(query, c, gateway, &cfg.answer))
        .collect::<Result<_, _>>()?;

    let deltas: Vec<f64> = augmented.iter().map(|a| a.entropy - baseline.entropy).collect();
    let corrective = filter_corrective(&deltas, cfg.tau);
    let report = EntropyReport {
        h_param: baseline.entropy,
        per_path: augmented
            .iter()
            .zip(&deltas)
            .enumerate()
            .map(|(index, (a, &delta_h))| PathEntropy {
                index,
                h_aug: a.entropy,
                delta_h,
                corrective: delta_h > cfg.tau,
            })
            .collect(),
        tau: cfg.tau,
        parametric_answer: baseline.answer,
        augmented_answers: augmented.into_iter().map(|a| a.answer).collect(),
    };

    let top_delta = || {
        deltas
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, &d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
    };

    let (used, fallback_used, processed_context) = if !corrective.is_empty() {
        let ctx = corrective
            .iter()
            .map(|&i| contexts[i].as_str())
            .collect::<Vec<_>>()
            .join(CONTEXT_DELIMITER);
        (corrective, FallbackUsed::None, ctx)
    } else if contexts.is_empty() || (cfg.fallback == FallbackPolicy::RawContext && raw_context.is_some()) {
        let raw = raw_context.ok_or(ConflictError::FallbackExhausted)?;
        (Vec::new(), FallbackUsed::RawContext, raw.to_string())
    } else {
        let i = top_delta().ok_or(ConflictError::FallbackExhausted)?;
        (vec![i], FallbackUsed::TopDelta, contexts[i].clone())
    };

    let response = gateway.generate(&cfg.answer.request(prompts::answer_augmented(query, &processed_context)))?;
    Ok(ContextResolution {
        response: response.text.trim().to_string(),
        processed_context,
        used,
        fallback_used,
        report,
        response_tokens: response.tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionOutcome {
    pub response: String,
    pub corrective_paths: Vec<ReasoningPath>,
    pub fallback_used: FallbackUsed,
    /// Index into the candidate paths used by a `top_delta` fallback.
    pub fallback_path: Option<usize>,
    pub processed_context: String,
    pub report: EntropyReport,
    pub response_tokens: TokenLogprobs,
}

/// Conflict resolution over the selected reasoning paths, with `raw_context`
/// as the last resort.
pub fn resolve(
    query: &str,
    super_paths: &[ReasoningPath],
    raw_context: Option<&str>,
    gateway: &dyn ModelGateway,
    cfg: &ResolutionConfig,
) -> Result<ResolutionOutcome, ConflictError> {
    let contexts = super_paths
        .iter()
        .enumerate()
        .map(|(i, p)| p.rendered_context.clone().ok_or(ConflictError::MissingContext(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let r = resolve_contexts(query, &contexts, raw_context, gateway, cfg)?;
    let (corrective_paths, fallback_path) = match r.fallback_used {
        FallbackUsed::None => (r.used.iter().map(|&i| super_paths[i].clone()).collect(), None),
        FallbackUsed::TopDelta => (Vec::new(), r.used.first().copied()),
        FallbackUsed::RawContext => (Vec::new(), None),
    };
    Ok(ResolutionOutcome {
        response: r.response,
        corrective_paths,
        fallback_used: r.fallback_used,
        fallback_path,
        processed_context: r.processed_context,
        report: r.report,
        response_tokens: r.response_tokens,
    })
}
