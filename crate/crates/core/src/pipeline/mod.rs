//! End-to-end question answering over one retrieved context.

mod clock;
mod config;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{self, ConflictError, EntropyReport, FallbackUsed, CONTEXT_DELIMITER};
use crate::eval::confidence_logprob;
use crate::gateway::{EmbeddingCache, GatewayError, GenerationResult, ModelGateway};
use crate::graph::{self, construct_graph, ExtractedTriple, GraphError, GraphStats, Segment};
use crate::prompts;
use crate::retrieval::{self, ImportantSets, QueryKeyElements, ReasoningPath, RetrievalError};

pub use crate::graph::{load_graph, save_graph};
pub use clock::{Clock, FrozenClock, SystemClock};
pub use config::{
    parse_config, parse_config_str, ConfigError, ConfigOverrides, Mode, ModelSpec, PipelineConfig, DEFAULT_EMBED_MODEL,
    DEFAULT_MODEL_ID,
};

/// A failure, labelled with the phase it happened in.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("graph construction: {0}")]
    Construction(#[from] GraphError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("conflict resolution: {0}")]
    Resolution(#[from] ConflictError),
    #[error("generation: {0}")]
    Generation(#[from] GatewayError),
}

impl PipelineError {
    /// The backend error underneath, if the failure came from the model.
    pub fn gateway_error(&self) -> Option<&GatewayError> {
        match self {
            PipelineError::Construction(GraphError::Gateway(e))
            | PipelineError::Retrieval(RetrievalError::Gateway(e))
            | PipelineError::Resolution(ConflictError::Gateway(e))
            | PipelineError::Generation(e) => Some(e),
            _ => None,
        }
    }
}

/// Phase durations in microseconds. The phases are measured between
/// consecutive clock readings, so they add up to `total_us` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub construction_us: u64,
    pub retrieval_us: u64,
    pub resolution_us: u64,
    pub total_us: u64,
}

impl PhaseTimings {
    fn from_marks(marks: [std::time::Duration; 4]) -> Self {
        let us = |a: std::time::Duration, b: std::time::Duration| b.saturating_sub(a).as_micros() as u64;
        let construction_us = us(marks[0], marks[1]);
        let retrieval_us = us(marks[1], marks[2]);
        let resolution_us = us(marks[2], marks[3]);
        Self {
            construction_us,
            retrieval_us,
            resolution_us,
            total_us: construction_us + retrieval_us + resolution_us,
        }
    }

    pub fn total_secs(&self) -> f64 {
        self.total_us as f64 / 1e6
    }
}

/// Everything one query produced, in pipeline order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub question: String,
    pub mode: Mode,
    pub segments: Vec<Segment>,
    pub extracted: Vec<ExtractedTriple>,
    pub skipped_segments: Vec<usize>,
    pub graph: Option<GraphStats>,
    pub key_elements: Option<QueryKeyElements>,
    pub important: Option<ImportantSets>,
    pub init_paths: usize,
    /// Selected paths with scores and rendered context.
    pub super_paths: Vec<ReasoningPath>,
    /// Contexts measured for entropy: rendered paths, or segment texts in
    /// `no_kg` mode.
    pub candidate_contexts: Vec<String>,
    pub entropy: Option<EntropyReport>,
    /// Indices into `candidate_contexts` that went into the final context.
    pub used_contexts: Vec<usize>,
    pub fallback_used: Option<FallbackUsed>,
    pub processed_context: String,
    pub response: String,
    /// Mean negative log-probability of the response tokens, in nats.
    pub response_confidence: Option<f64>,
    pub timings: PhaseTimings,
}

impl QueryTrace {
    fn new(question: &str, mode: Mode) -> Self {
        Self {
            question: question.to_string(),
            mode,
            segments: Vec::new(),
            extracted: Vec::new(),
            skipped_segments: Vec::new(),
            graph: None,
            key_elements: None,
            important: None,
            init_paths: 0,
            super_paths: Vec::new(),
            candidate_contexts: Vec::new(),
            entropy: None,
            used_contexts: Vec::new(),
            fallback_used: None,
            processed_context: String::new(),
            response: String::new(),
            response_confidence: None,
            timings: PhaseTimings::default(),
        }
    }

    /// Appends the trace as one JSON line.
    pub fn append_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, self)?;
        out.write_all(b"\n")
    }
}

fn finish(trace: &mut QueryTrace, out: GenerationResult) {
    trace.response = out.text.trim().to_string();
    trace.response_confidence = confidence_logprob(&out.tokens).ok();
}

/// Answers `question` from `context` according to `cfg.mode`.
pub fn answer_query(
    question: &str,
    context: &str,
    cfg: &PipelineConfig,
    gateway: &dyn ModelGateway,
    clock: &dyn Clock,
) -> Result<QueryTrace, PipelineError> {
    let mut trace = QueryTrace::new(question, cfg.mode);
    let t0 = clock.now();
    if cfg.mode != Mode::NoRag && context.trim().is_empty() {
        return Err(ConflictError::FallbackExhausted.into());
    }
    let answer = cfg.answer_settings();
    let extraction = cfg.extraction_settings();
    let resolution = cfg.resolution();

    let marks = match cfg.mode {
        Mode::Full | Mode::NoConflict => {
            let built = construct_graph(context, cfg.max_segment_tokens, gateway, &extraction)?;
            trace.graph = Some(built.graph.stats());
            trace.segments = built.segments;
            trace.extracted = built.extracted;
            trace.skipped_segments = built.skipped_segments;
            let t1 = clock.now();

            let cache = EmbeddingCache::new(gateway);
            let r = retrieval::retrieve(question, &built.graph, gateway, &extraction, &cfg.retrieval, &cache)?;
            trace.key_elements = Some(r.key);
            trace.important = Some(r.important);
            trace.init_paths = r.init_count;
            trace.candidate_contexts = r
                .super_paths
                .iter()
                .map(|p| p.rendered_context.clone().unwrap_or_default())
                .collect();
            trace.super_paths = r.super_paths;
            let t2 = clock.now();

            if cfg.mode == Mode::Full {
                let out = conflict::resolve_contexts(
                    question,
                    &trace.candidate_contexts,
                    Some(context),
                    gateway,
                    &resolution,
                )?;
                trace.entropy = Some(out.report);
                trace.used_contexts = out.used;
                trace.fallback_used = Some(out.fallback_used);
                trace.processed_context = out.processed_context;
                trace.response = out.response;
                trace.response_confidence = confidence_logprob(&out.response_tokens).ok();
            } else {
                let (ctx, fallback) = if trace.candidate_contexts.is_empty() {
                    (context.to_string(), FallbackUsed::RawContext)
                } else {
                    trace.used_contexts = (0..trace.candidate_contexts.len()).collect();
                    (trace.candidate_contexts.join(CONTEXT_DELIMITER), FallbackUsed::None)
                };
                let out = gateway.generate(&answer.request(prompts::answer_augmented(question, &ctx)))?;
                trace.fallback_used = Some(fallback);
                trace.processed_context = ctx;
                finish(&mut trace, out);
            }
            [t0, t1, t2, clock.now()]
        }
        Mode::NoKg => {
            trace.segments = graph::segment(context, cfg.max_segment_tokens)?;
            trace.candidate_contexts = trace.segments.iter().map(|s| s.text.clone()).collect();
            let t1 = clock.now();
            let out =
                conflict::resolve_contexts(question, &trace.candidate_contexts, Some(context), gateway, &resolution)?;
            trace.entropy = Some(out.report);
            trace.used_contexts = out.used;
            trace.fallback_used = Some(out.fallback_used);
            trace.processed_context = out.processed_context;
            trace.response = out.response;
            trace.response_confidence = confidence_logprob(&out.response_tokens).ok();
            [t0, t1, t1, clock.now()]
        }
        Mode::StandardRag => {
            let out = gateway.generate(&answer.request(prompts::answer_augmented(question, context)))?;
            trace.processed_context = context.to_string();
            finish(&mut trace, out);
            [t0, t0, t0, clock.now()]
        }
        Mode::NoRag => {
            let base = conflict::parametric_baseline(question, gateway, &answer)?;
            trace.entropy = Some(EntropyReport {
                h_param: base.entropy,
                per_path: Vec::new(),
                tau: cfg.tau,
                parametric_answer: base.answer.clone(),
                augmented_answers: Vec::new(),
            });
            trace.response = base.answer;
            trace.response_confidence = confidence_logprob(&base.tokens).ok();
            [t0, t0, t0, clock.now()]
        }
    };
    trace.timings = PhaseTimings::from_marks(marks);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;

    const SCRIPT: &str = r#"
{"kind":"generate","match":{"regex":"(?s)^Extract"},"response":{"text":"[{\"head\":\"Alpha\",\"relation\":\"LIKES\",\"tail\":\"Beta\",\"head_desc\":\"First letter.\"}]"}}
{"kind":"generate","match":{"regex":"(?s)^Identify"},"response":{"text":"{\"entities\":[\"Alpha\"],\"relations\":[\"likes\"],\"intent\":\"thing\"}"}}
{"kind":"generate","match":{"regex":"(?s)own knowledge"},"response":{"text":"Gamma"}}
{"kind":"generate","match":{"regex":"(?s)Knowledge:"},"response":{"text":"Beta"}}
"#;

    fn mock() -> MockBackend {
        MockBackend::from_script(SCRIPT).unwrap()
    }

    fn run(mode: Mode, context: &str) -> Result<QueryTrace, PipelineError> {
        let cfg = PipelineConfig {
            mode,
            ..Default::default()
        };
        answer_query("What does Alpha like?", context, &cfg, &mock(), &FrozenClock)
    }

    #[test]
    fn every_mode_answers() {
        for mode in Mode::ALL {
            let t = run(mode, "Alpha likes Beta.").unwrap();
            let expected = if mode == Mode::NoRag { "Gamma" } else { "Beta" };
            assert_eq!(t.response, expected, "{mode}");
            assert_eq!(t.timings, PhaseTimings::default());
        }
    }

    #[test]
    fn full_mode_falls_back_to_top_delta() {
        let t = run(Mode::Full, "Alpha likes Beta.").unwrap();
        assert_eq!(t.graph.unwrap().triples, 1);
        assert_eq!(t.super_paths.len(), 2);
        // every answer is fully certain, so nothing clears tau
        assert_eq!(t.fallback_used, Some(FallbackUsed::TopDelta));
        assert_eq!(t.used_contexts, vec![0]);
        assert_eq!(t.processed_context, t.candidate_contexts[0]);
        assert_eq!(t.response_confidence, Some(0.0));
    }

    #[test]
    fn no_conflict_uses_every_path() {
        let t = run(Mode::NoConflict, "Alpha likes Beta.").unwrap();
        assert_eq!(t.used_contexts, vec![0, 1]);
        assert_eq!(t.processed_context, t.candidate_contexts.join(CONTEXT_DELIMITER));
        assert!(t.entropy.is_none());
    }

    #[test]
    fn empty_context() {
        for mode in Mode::ALL {
            let r = run(mode, "  ");
            if mode == Mode::NoRag {
                assert_eq!(r.unwrap().response, "Gamma");
            } else {
                assert!(
                    matches!(r, Err(PipelineError::Resolution(ConflictError::FallbackExhausted))),
                    "{mode}"
                );
            }
        }
    }

    #[test]
    fn errors_carry_phase_and_backend_cause() {
        let cfg = PipelineConfig::default();
        let empty = MockBackend::from_script("").unwrap();
        let err = answer_query("Q?", "Some text.", &cfg, &empty, &FrozenClock).unwrap_err();
        assert!(err.to_string().starts_with("graph construction:"));
        assert!(matches!(err.gateway_error(), Some(GatewayError::ScriptMiss { .. })));
    }

    #[test]
    fn trace_jsonl_round_trips() {
        let t = run(Mode::Full, "Alpha likes Beta.").unwrap();
        let mut buf = Vec::new();
        t.append_jsonl(&mut buf).unwrap();
        assert!(buf.ends_with(b"\n"));
        let back: QueryTrace = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, t);
    }
}
