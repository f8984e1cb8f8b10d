use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::EvalRecord;
use super::metrics::{cpr, is_correct};
use crate::conflict::FallbackUsed;
use crate::gateway::ModelGateway;
use crate::pipeline::{answer_query, Clock, Mode, PipelineConfig, PipelineError, QueryTrace};
use crate::text::whitespace_tokens;

pub const EVAL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("record {id}: {source}")]
    Record { id: String, source: PipelineError },
    #[error("building worker pool: {0}")]
    Pool(String),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
}

/// Per-record outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: String,
    pub prediction: String,
    pub correct: bool,
    pub cpr: Option<f64>,
    pub h_param: Option<f64>,
    pub min_delta_h: Option<f64>,
    pub max_delta_h: Option<f64>,
    pub corrective_count: usize,
    pub fallback_used: Option<FallbackUsed>,
    pub processed_context_tokens: usize,
    pub response_confidence: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub mode: Mode,
    pub records: usize,
    pub evaluated: usize,
    pub skipped: Vec<SkippedRecord>,
    pub accuracy: f64,
    /// Mean over records that carry gold spans.
    pub mean_cpr: Option<f64>,
    pub mean_wall_time_s: f64,
    pub mean_processed_context_tokens: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Sorted by record id.
    pub rows: Vec<RecordResult>,
    pub summary: EvalSummary,
    /// Traces in row order.
    pub traces: Vec<QueryTrace>,
}

fn row(record: &EvalRecord, trace: &QueryTrace) -> RecordResult {
    let deltas = trace.entropy.as_ref().map(|r| r.deltas()).unwrap_or_default();
    let min = deltas.iter().copied().reduce(f64::min);
    let max = deltas.iter().copied().reduce(f64::max);
    let spans = record.gold_span_texts();
    RecordResult {
        id: record.id.clone(),
        prediction: trace.response.clone(),
        correct: is_correct(&trace.response, &record.gold_answers),
        cpr: cpr(&trace.processed_context, spans.as_deref(), &record.gold_answers).ok(),
        h_param: trace.entropy.as_ref().map(|r| r.h_param),
        min_delta_h: min,
        max_delta_h: max,
        corrective_count: trace
            .entropy
            .as_ref()
            .map(|r| r.corrective_indices().len())
            .unwrap_or(0),
        fallback_used: trace.fallback_used,
        processed_context_tokens: whitespace_tokens(&trace.processed_context),
        response_confidence: trace.response_confidence,
        wall_time_s: trace.timings.total_secs(),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Runs the pipeline over every record on `cfg.parallelism` workers.
///
/// With `skip_errors`, failing records are listed in the summary and left
/// out of the metrics; otherwise the first failure (in id order) aborts.
pub fn run_eval(
    records: &[EvalRecord],
    cfg: &PipelineConfig,
    gateway: &dyn ModelGateway,
    clock: &dyn Clock,
    skip_errors: bool,
) -> Result<EvalResult, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let mut outcomes: Vec<(&EvalRecord, Result<QueryTrace, PipelineError>)> = pool.install(|| {
        records
            .par_iter()
            .map(|r| (r, answer_query(&r.question, &r.context, cfg, gateway, clock)))
            .collect()
    });
    outcomes.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    for (record, outcome) in outcomes {
        match outcome {
            Ok(trace) => {
                rows.push(row(record, &trace));
                traces.push(trace);
            }
            Err(e) if skip_errors => {
                tracing::warn!(id = %record.id, error = %e, "skipping record");
                skipped.push(SkippedRecord {
                    id: record.id.clone(),
                    error: e.to_string(),
                });
            }
            Err(source) => {
                return Err(EvalError::Record {
                    id: record.id.clone(),
                    source,
                })
            }
        }
    }

    let summary = EvalSummary {
        schema_version: EVAL_SCHEMA_VERSION,
        mode: cfg.mode,
        records: records.len(),
        evaluated: rows.len(),
        skipped,
        accuracy: mean(rows.iter().map(|r| if r.correct { 1.0 } else { 0.0 })).unwrap_or(0.0),
        mean_cpr: mean(rows.iter().filter_map(|r| r.cpr)),
        mean_wall_time_s: mean(rows.iter().map(|r| r.wall_time_s)).unwrap_or(0.0),
        mean_processed_context_tokens: mean(rows.iter().map(|r| r.processed_context_tokens as f64)).unwrap_or(0.0),
    };
    Ok(EvalResult { rows, summary, traces })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one CSV row per record.
pub fn write_rows_csv(rows: &[RecordResult], out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "prediction",
        "correct",
        "cpr",
        "h_param",
        "min_delta_h",
        "max_delta_h",
        "corrective_count",
        "fallback_used",
        "processed_context_tokens",
        "response_confidence",
        "wall_time_s",
    ])?;
    for r in rows {
        let fallback = match r.fallback_used {
            None => "",
            Some(FallbackUsed::None) => "none",
            Some(FallbackUsed::TopDelta) => "top_delta",
            Some(FallbackUsed::RawContext) => "raw_context",
        };
        w.write_record([
            r.id.clone(),
            r.prediction.clone(),
            r.correct.to_string(),
            opt(r.cpr),
            opt(r.h_param),
            opt(r.min_delta_h),
            opt(r.max_delta_h),
            r.corrective_count.to_string(),
            fallback.to_string(),
            r.processed_context_tokens.to_string(),
            opt(r.response_confidence),
            r.wall_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &EvalSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Writes `results.csv`, `summary.json` and, when `traces` is set,
/// `traces.jsonl` into `dir`.
pub fn write_results(result: &EvalResult, dir: &Path, traces: bool) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    write_rows_csv(
        &result.rows,
        std::io::BufWriter::new(std::fs::File::create(dir.join("results.csv"))?),
    )?;
    std::fs::write(dir.join("summary.json"), summary_json(&result.summary))?;
    if traces {
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("traces.jsonl"))?);
        for t in &result.traces {
            t.append_jsonl(&mut out)?;
        }
        out.flush()?;
    }
    Ok(())
}
