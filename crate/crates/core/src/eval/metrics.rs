use std::collections::HashSet;

use thiserror::Error;

use crate::gateway::TokenLogprobs;
use crate::text::{normalize_answer, sentence_spans};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("record has no gold spans")]
    MissingGoldSpans,
    #[error("response has no tokens")]
    EmptySequence,
}

/// Share of a sentence's distinct tokens that must occur in a gold span for
/// the sentence to count as gold-related.
pub const SPAN_OVERLAP_THRESHOLD: f64 = 0.6;

/// True when any non-empty normalized gold answer is a substring of the
/// normalized prediction.
pub fn is_correct(prediction: &str, gold_answers: &[String]) -> bool {
    let pred = normalize_answer(prediction);
    gold_answers
        .iter()
        .map(|g| normalize_answer(g))
        .filter(|g| !g.is_empty())
        .any(|g| pred.contains(&g))
}

fn sentences(text: &str) -> Vec<&str> {
    text.lines()
        .flat_map(|line| sentence_spans(line).into_iter().map(move |r| &line[r]))
        .collect()
}

fn visible_chars(s: &str) -> usize {
    s.chars().filter(|c| !c.is_whitespace()).count()
}

/// Context precision ratio: the fraction of the processed context's
/// non-whitespace characters that lie in gold-related sentences.
///
/// A sentence is gold-related when it contains a gold answer, or when at least
/// [`SPAN_OVERLAP_THRESHOLD`] of its distinct normalized tokens occur in the
/// gold span texts. An empty context scores 0.
pub fn cpr(
    processed_context: &str,
    gold_spans: Option<&[String]>,
    gold_answers: &[String],
) -> Result<f64, MetricError> {
    let spans = gold_spans.ok_or(MetricError::MissingGoldSpans)?;
    let gold_tokens: HashSet<String> = spans
        .iter()
        .flat_map(|s| normalize_answer(s).split(' ').map(str::to_string).collect::<Vec<_>>())
        .collect();
    let answers: Vec<String> = gold_answers
        .iter()
        .map(|g| normalize_answer(g))
        .filter(|g| !g.is_empty())
        .collect();

    let mut total = 0usize;
    let mut related = 0usize;
    for sentence in sentences(processed_context) {
        let n = visible_chars(sentence);
        total += n;
        let norm = normalize_answer(sentence);
        let padded = format!(" {norm} ");
        let has_answer = answers.iter().any(|a| padded.contains(&format!(" {a} ")));
        let tokens: HashSet<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
        let overlap = if tokens.is_empty() {
            0.0
        } else {
            tokens.iter().filter(|t| gold_tokens.contains(**t)).count() as f64 / tokens.len() as f64
        };
        if has_answer || overlap >= SPAN_OVERLAP_THRESHOLD {
            related += n;
        }
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok((related as f64 / total as f64).clamp(0.0, 1.0))
}

/// Mean negative log-probability of the chosen tokens, in nats. Lower means
/// more confident.
pub fn confidence_logprob(tokens: &TokenLogprobs) -> Result<f64, MetricError> {
    if tokens.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let total: f64 = tokens.positions().iter().map(|p| p.logprob).sum();
    Ok((0.0 - total) / tokens.len() as f64)
}
