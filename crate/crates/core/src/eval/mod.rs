//! Dataset loading, answer metrics and batch evaluation.

mod dataset;
mod metrics;
mod runner;

pub use dataset::{load_dataset, parse_dataset, DatasetError, EvalRecord};
pub use metrics::{confidence_logprob, cpr, is_correct, MetricError, SPAN_OVERLAP_THRESHOLD};
pub use runner::{
    run_eval, summary_json, write_results, write_rows_csv, EvalError, EvalResult, EvalSummary, RecordResult,
    SkippedRecord, EVAL_SCHEMA_VERSION,
};
