//! Text utilities shared by segmentation, normalization and scoring.

use std::ops::Range;

/// Entity/relation id normalization: lowercase, trim, collapse internal
/// whitespace runs to a single space.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Answer normalization used for accuracy: lowercase, punctuation removed,
/// English articles removed, whitespace collapsed.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn whitespace_tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

const TERMINATORS: [char; 4] = ['.', '?', '!', '…'];
const CLOSERS: [char; 6] = ['"', '\'', ')', ']', '”', '’'];

/// Byte ranges of the sentences in `text`, trimmed of surrounding whitespace.
///
/// A sentence ends at `.`, `?`, `!` or `…` (plus any closing quotes or
/// brackets) when followed by whitespace and then an uppercase letter, digit
/// or opening quote, or by the end of the text. A blank line always ends a
/// sentence.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if TERMINATORS.contains(&c) {
            let mut j = i + 1;
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = k == chars.len()
                || (k > j && {
                    let next = chars[k].1;
                    next.is_uppercase() || next.is_ascii_digit() || matches!(next, '"' | '“' | '\'' | '(')
                });
            if boundary {
                cuts.push(end);
            }
            i = j;
            continue;
        }
        if c == '\n' {
            let mut k = i + 1;
            while k < chars.len() && chars[k].1 != '\n' && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k < chars.len() && chars[k].1 == '\n' {
                cuts.push(chars[i].0);
            }
        }
        i += 1;
    }
    cuts.push(text.len());

    let mut spans = Vec::new();
    let mut start = 0;
    for cut in cuts {
        if cut < start {
            continue;
        }
        if let Some(r) = trim_range(text, start..cut) {
            spans.push(r);
        }
        start = cut;
    }
    spans
}

/// Shrinks a byte range to exclude leading/trailing whitespace; `None` if
/// nothing but whitespace remains.
pub fn trim_range(text: &str, r: Range<usize>) -> Option<Range<usize>> {
    let slice = &text[r.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        None
    } else {
        Some(r.start + lead..r.start + lead + trimmed.len())
    }
}

/// Byte ranges of whitespace-separated tokens.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..text.len());
    }
    out
}
