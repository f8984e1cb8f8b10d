//! Scripted, deterministic backend for offline runs.
//!
//! A script is a JSON Lines file. Blank lines and lines starting with `#` are
//! ignored. Every other line is one entry:
//!
//! ```text
//! {"kind":"generate","match":"Q1","response":{"text":"Sinaloa","tokens":[
//!     {"token":"Sinaloa","candidates":[{"token":"Sinaloa","logprob":0.0}]}]}}
//! {"kind":"generate","match":{"regex":"(?s)^Extract"},"response":{"text":"[]"}}
//! {"kind":"embed","match":"paris","response":{"vector":[1.0,0.0,0.0]}}
//! ```
//!
//! `match` is either an exact string or `{"regex": ...}`. Exact entries win;
//! regex entries are tried in file order. Generate responses without `tokens`
//! get synthesized certain tokens (one per whitespace-led word). Embed matching
//! compares case-folded, whitespace-collapsed text; texts without an override
//! get a unit vector drawn from a ChaCha stream seeded by the SHA-256 of the
//! folded text.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use regex::Regex;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{
    check_embed_input, EmbeddingVector, GatewayError, GenerationRequest, GenerationResult, ModelGateway,
    TokenCandidate, TokenLogprobs, TokenPosition,
};
use crate::text::normalize_name;

pub const MOCK_EMBEDDING_DIM: usize = 64;
const MOCK_MODEL_ID: &str = "mock";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    kind: String,
    #[serde(rename = "match")]
    matcher: RawMatch,
    response: serde_json::Value,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMatch {
    Exact(String),
    Regex { regex: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerate {
    text: Option<String>,
    tokens: Option<Vec<RawPosition>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPosition {
    token: String,
    logprob: Option<f64>,
    candidates: Vec<TokenCandidate>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmbed {
    vector: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ScriptedGeneration {
    text: String,
    tokens: TokenLogprobs,
}

#[derive(Debug)]
struct Table<T> {
    exact: HashMap<String, T>,
    patterns: Vec<(Regex, T)>,
}

impl<T> Default for Table<T> {
    fn default() -> Self {
        Self {
            exact: HashMap::new(),
            patterns: Vec::new(),
        }
    }
}

impl<T> Table<T> {
    fn lookup(&self, key: &str, raw: &str) -> Option<&T> {
        self.exact
            .get(key)
            .or_else(|| self.patterns.iter().find(|(re, _)| re.is_match(raw)).map(|(_, v)| v))
    }
}

/// Backend answering from a loaded script. Immutable after load.
#[derive(Debug)]
pub struct MockBackend {
    generations: Table<ScriptedGeneration>,
    embeddings: Table<Vec<f64>>,
    dim: usize,
}

impl MockBackend {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_script(&text)
    }

    pub fn from_script(script: &str) -> Result<Self, GatewayError> {
        let mut generations = Table::default();
        let mut embeddings: Table<Vec<f64>> = Table::default();
        let mut dim: Option<usize> = None;

        for (idx, line) in script.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| GatewayError::ParseError { line: line_no, message };
            let entry: RawEntry = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
            match entry.kind.as_str() {
                "generate" => {
                    let raw: RawGenerate = serde_json::from_value(entry.response).map_err(|e| err(e.to_string()))?;
                    let scripted = build_generation(raw).map_err(err)?;
                    insert(&mut generations, entry.matcher, scripted, |s| s.to_string()).map_err(err)?;
                }
                "embed" => {
                    let raw: RawEmbed = serde_json::from_value(entry.response).map_err(|e| err(e.to_string()))?;
                    if raw.vector.is_empty() || raw.vector.iter().any(|v| !v.is_finite()) {
                        return Err(err("embedding vector must be non-empty and finite".into()));
                    }
                    match dim {
                        Some(d) if d != raw.vector.len() => {
                            return Err(err(format!(
                                "embedding dimension {} differs from earlier entries ({d})",
                                raw.vector.len()
                            )))
                        }
                        _ => dim = Some(raw.vector.len()),
                    }
                    insert(&mut embeddings, entry.matcher, raw.vector, normalize_name).map_err(err)?;
                }
                other => return Err(err(format!("unknown kind {other:?}"))),
            }
        }

        Ok(Self {
            generations,
            embeddings,
            dim: dim.unwrap_or(MOCK_EMBEDDING_DIM),
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let key = normalize_name(text);
        if let Some(v) = self.embeddings.lookup(&key, text) {
            return v.clone();
        }
        hashed_unit_vector(&key, self.dim)
    }
}

fn insert<T>(table: &mut Table<T>, matcher: RawMatch, value: T, key_of: impl Fn(&str) -> String) -> Result<(), String> {
    match matcher {
        RawMatch::Exact(s) => {
            let key = key_of(&s);
            if table.exact.insert(key, value).is_some() {
                return Err(format!("duplicate exact match {s:?}"));
            }
        }
        RawMatch::Regex { regex } => {
            let re = Regex::new(&regex).map_err(|e| format!("bad regex: {e}"))?;
            table.patterns.push((re, value));
        }
    }
    Ok(())
}

fn build_generation(raw: RawGenerate) -> Result<ScriptedGeneration, String> {
    match (raw.text, raw.tokens) {
        (None, None) => Err("generate response needs `text` or `tokens`".into()),
        (text, Some(raw_tokens)) => {
            let mut positions = Vec::with_capacity(raw_tokens.len());
            for (i, p) in raw_tokens.into_iter().enumerate() {
                let logprob = match p.logprob {
                    Some(lp) => lp,
                    None => p
                        .candidates
                        .iter()
                        .find(|c| c.token == p.token)
                        .map(|c| c.logprob)
                        .ok_or_else(|| {
                            format!(
                                "token {}: chosen token {:?} not among candidates and no logprob",
                                i + 1,
                                p.token
                            )
                        })?,
                };
                positions.push(TokenPosition {
                    token: p.token,
                    logprob,
                    candidates: p.candidates,
                });
            }
            let tokens = TokenLogprobs::new(positions)?;
            let text = text.unwrap_or_else(|| tokens.text());
            Ok(ScriptedGeneration { text, tokens })
        }
        (Some(text), None) => {
            let tokens = TokenLogprobs::deterministic(&split_words(&text));
            Ok(ScriptedGeneration { text, tokens })
        }
    }
}

/// Splits text into tokens that each carry their leading whitespace, so the
/// tokens concatenate back to the input.
fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_word = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_word {
                out.push(&text[start..i]);
                start = i;
                in_word = false;
            }
        } else {
            in_word = true;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn hashed_unit_vector(key: &str, dim: usize) -> Vec<f64> {
    let seed: [u8; 32] = Sha256::digest(key.as_bytes()).into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

impl ModelGateway for MockBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        req.validate()?;
        let scripted = self
            .generations
            .lookup(&req.prompt, &req.prompt)
            .ok_or_else(|| GatewayError::ScriptMiss {
                kind: "generate",
                input: req.prompt.clone(),
            })?;

        let k = req.logprob_top_k as usize;
        let positions = scripted
            .tokens
            .positions()
            .iter()
            .map(|p| {
                let mut candidates = p.candidates.clone();
                candidates.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
                candidates.truncate(k);
                TokenPosition {
                    candidates,
                    ..p.clone()
                }
            })
            .collect();

        Ok(GenerationResult {
            text: scripted.text.clone(),
            tokens: TokenLogprobs::new(positions).map_err(GatewayError::MalformedResponse)?,
            model_id: if req.model_id.is_empty() {
                MOCK_MODEL_ID.into()
            } else {
                req.model_id.clone()
            },
            latency: Duration::ZERO,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        check_embed_input(texts)?;
        Ok(texts
            .iter()
            .map(|t| EmbeddingVector {
                values: self.embed_one(t),
                model_id: MOCK_MODEL_ID.into(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::cosine;

    const ONE_PAIR: &str = r#"{"kind":"generate","match":"Q1","response":{"text":"Sinaloa","tokens":[{"token":"Sinaloa","candidates":[{"token":"Sinaloa","logprob":0.0}]}]}}"#;

    #[test]
    fn serves_scripted_pair() {
        let mock = MockBackend::from_script(ONE_PAIR).unwrap();
        let out = mock.generate(&GenerationRequest::new("Q1", "")).unwrap();
        assert_eq!(out.text, "Sinaloa");
        assert_eq!(out.tokens.len(), 1);
        assert_eq!(out.tokens.positions()[0].candidates.len(), 1);
        assert_eq!(out.latency, Duration::ZERO);
    }

    #[test]
    fn unknown_prompt_is_script_miss() {
        let mock = MockBackend::from_script(ONE_PAIR).unwrap();
        let err = mock.generate(&GenerationRequest::new("Q2", "")).unwrap_err();
        assert!(matches!(err, GatewayError::ScriptMiss { kind: "generate", .. }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let script = format!("# header\n{ONE_PAIR}\n{{\"kind\":\"generate\",\"match\":\"x\"}}\n");
        match MockBackend::from_script(&script) {
            Err(GatewayError::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            MockBackend::from_script("not json"),
            Err(GatewayError::ParseError { line: 1, .. })
        ));
        let bad_lp = r#"{"kind":"generate","match":"a","response":{"tokens":[{"token":"a","candidates":[{"token":"a","logprob":0.5}]}]}}"#;
        assert!(MockBackend::from_script(bad_lp).is_err());
        let dup = format!("{ONE_PAIR}\n{ONE_PAIR}");
        assert!(MockBackend::from_script(&dup).is_err());
    }

    #[test]
    fn exact_beats_regex_and_regexes_apply_in_order() {
        let script = r#"
{"kind":"generate","match":{"regex":"^Q"},"response":{"text":"first regex"}}
{"kind":"generate","match":{"regex":"^Q1"},"response":{"text":"second regex"}}
{"kind":"generate","match":"Q1","response":{"text":"exact"}}
"#;
        let mock = MockBackend::from_script(script).unwrap();
        assert_eq!(mock.generate(&GenerationRequest::new("Q1", "")).unwrap().text, "exact");
        assert_eq!(
            mock.generate(&GenerationRequest::new("Q123", "")).unwrap().text,
            "first regex"
        );
    }

    #[test]
    fn synthesized_tokens_reconstruct_text() {
        let script = r#"{"kind":"generate","match":"p","response":{"text":"  the answer\nis  Sinaloa. "}}"#;
        let mock = MockBackend::from_script(script).unwrap();
        let out = mock.generate(&GenerationRequest::new("p", "")).unwrap();
        assert_eq!(out.tokens.text(), out.text);
        assert_eq!(out.tokens.len(), 5);
    }

    #[test]
    fn candidates_truncated_to_top_k() {
        let script = r#"{"kind":"generate","match":"p","response":{"tokens":[{"token":"a","candidates":[
            {"token":"c","logprob":-3.0},{"token":"a","logprob":-0.1},{"token":"b","logprob":-2.0}]}]}}"#
            .replace('\n', "");
        let mock = MockBackend::from_script(&script).unwrap();
        let mut req = GenerationRequest::new("p", "");
        req.logprob_top_k = 2;
        let out = mock.generate(&req).unwrap();
        let toks: Vec<_> = out.tokens.positions()[0]
            .candidates
            .iter()
            .map(|c| c.token.as_str())
            .collect();
        assert_eq!(toks, ["a", "b"]);
        assert_eq!(out.tokens.positions()[0].logprob, -0.1);
    }

    #[test]
    fn embeddings_are_deterministic_unit_vectors() {
        let mock = MockBackend::from_script("").unwrap();
        let v = mock.embed(&["a".into(), "a".into(), "b".into()]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], v[1]);
        assert!(v.iter().all(|e| e.dim() == MOCK_EMBEDDING_DIM));
        let norm: f64 = v[2].values.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let x = mock.embed(&["x".into()]).unwrap();
        assert!((cosine(&x[0].values, &x[0].values) - 1.0).abs() < 1e-9);
        // case-folded lookup
        let up = mock
            .embed(&["Ciudad  Deportiva".into(), "CIUDAD DEPORTIVA".into()])
            .unwrap();
        assert_eq!(up[0], up[1]);
    }

    #[test]
    fn embed_overrides_and_errors() {
        let script = r#"
{"kind":"embed","match":"north","response":{"vector":[1.0,0.0]}}
{"kind":"embed","match":{"regex":"^east"},"response":{"vector":[0.0,1.0]}}
"#;
        let mock = MockBackend::from_script(script).unwrap();
        let v = mock
            .embed(&["North".into(), "eastward".into(), "other".into()])
            .unwrap();
        assert_eq!(v[0].values, vec![1.0, 0.0]);
        assert_eq!(v[1].values, vec![0.0, 1.0]);
        assert_eq!(v[2].dim(), 2);
        assert!(matches!(mock.embed(&[]), Err(GatewayError::EmptyInput)));
        assert!(matches!(mock.embed(&["".into()]), Err(GatewayError::EmptyInput)));

        let mixed = r#"{"kind":"embed","match":"a","response":{"vector":[1.0]}}
{"kind":"embed","match":"b","response":{"vector":[1.0,2.0]}}"#;
        assert!(matches!(
            MockBackend::from_script(mixed),
            Err(GatewayError::ParseError { line: 2, .. })
        ));
    }
}
