use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate record id {id:?}")]
    DuplicateId { line: usize, id: String },
}

/// One question with its retrieved context and gold answers.
///
/// `gold_spans` are `[start, end)` character offsets into `context` marking
/// the passages that support the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub id: String,
    pub question: String,
    pub context: String,
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_spans: Option<Vec<(usize, usize)>>,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".into());
        }
        if self.question.trim().is_empty() {
            return Err("question is empty".into());
        }
        if self.gold_answers.is_empty() {
            return Err("gold_answers is empty".into());
        }
        if let Some(spans) = &self.gold_spans {
            let len = self.context.chars().count();
            for &(s, e) in spans {
                if s >= e || e > len {
                    return Err(format!(
                        "gold span [{s}, {e}) is out of range for a context of {len} characters"
                    ));
                }
            }
        }
        Ok(())
    }

    /// The text of each gold span.
    pub fn gold_span_texts(&self) -> Option<Vec<String>> {
        let spans = self.gold_spans.as_ref()?;
        Some(
            spans
                .iter()
                .map(|&(s, e)| self.context.chars().skip(s).take(e - s).collect())
                .collect(),
        )
    }
}

/// Parses JSONL records, one per non-blank line. Line numbers in errors are
/// 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<EvalRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        record
            .validate()
            .map_err(|message| DatasetError::Parse { line, message })?;
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<EvalRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let text = r#"{"id":"a","question":"Q?","context":"héllo world","gold_answers":["world"],"gold_spans":[[6,11]]}

{"id":"b","question":"Q2?","context":"","gold_answers":["x"]}
"#;
        let rs = parse_dataset(text).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[0].gold_span_texts().unwrap(), vec!["world"]);
        assert_eq!(rs[1].gold_spans, None);
    }

    #[test]
    fn rejects_bad_records_with_line_numbers() {
        let ok = r#"{"id":"a","question":"Q?","context":"c","gold_answers":["x"]}"#;
        let cases = [
            (
                r#"{"id":"b","question":"Q?","context":"c","gold_answers":["x"],"extra":1}"#,
                "unknown field",
            ),
            (
                r#"{"id":"b","question":"Q?","context":"c","gold_answers":[]}"#,
                "gold_answers is empty",
            ),
            (
                r#"{"id":"b","question":"Q?","context":"c","gold_answers":["x"],"gold_spans":[[0,5]]}"#,
                "out of range",
            ),
            (r#"{"id":"b","question":"Q?","context":"c"}"#, "missing field"),
            ("not json", "expected"),
        ];
        for (bad, needle) in cases {
            let err = parse_dataset(&format!("{ok}\n{bad}\n")).unwrap_err();
            match err {
                DatasetError::Parse { line, message } => {
                    assert_eq!(line, 2);
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{other:?}"),
            }
        }
        assert!(matches!(
            parse_dataset(&format!("{ok}\n{ok}")),
            Err(DatasetError::DuplicateId { line: 2, .. })
        ));
    }
}
