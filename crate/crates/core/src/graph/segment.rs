use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::text::{sentence_spans, token_spans};

pub const DEFAULT_MAX_SEGMENT_TOKENS: usize = 256;

/// A contiguous piece of the retrieved content. `byte_range` indexes into the
/// original content and `text` is exactly that slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    pub text: String,
    pub byte_range: (usize, usize),
}

/// Splits `content` into sentence-aligned segments of at most
/// `max_segment_tokens` whitespace tokens.
///
/// Sentences are packed greedily; a sentence joins the current segment only
/// while the merged token count stays strictly below the cap. A sentence that
/// alone exceeds the cap is cut into cap-sized token runs.
pub fn segment(content: &str, max_segment_tokens: usize) -> Result<Vec<Segment>, GraphError> {
    if content.trim().is_empty() {
        return Err(GraphError::EmptyContent);
    }
    if max_segment_tokens == 0 {
        return Err(GraphError::InvalidSegmentCap);
    }

    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize, usize)> = None; // (start, end, tokens)

    for sentence in sentence_spans(content) {
        let tokens: Vec<_> = token_spans(&content[sentence.clone()])
            .into_iter()
            .map(|r| (sentence.start + r.start, sentence.start + r.end))
            .collect();
        let n = tokens.len();

        if n > max_segment_tokens {
            if let Some((s, e, _)) = current.take() {
                ranges.push((s, e));
            }
            for chunk in tokens.chunks(max_segment_tokens) {
                ranges.push((chunk[0].0, chunk[chunk.len() - 1].1));
            }
            continue;
        }

        current = match current {
            Some((s, _, count)) if count + n < max_segment_tokens => Some((s, sentence.end, count + n)),
            Some((s, e, _)) => {
                ranges.push((s, e));
                Some((sentence.start, sentence.end, n))
            }
            None => Some((sentence.start, sentence.end, n)),
        };
    }
    if let Some((s, e, _)) = current {
        ranges.push((s, e));
    }

    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(id, (s, e))| Segment {
            id,
            text: content[s..e].to_string(),
            byte_range: (s, e),
        })
        .collect())
}
