//! OpenAI-compatible HTTP backend.

use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::{debug, warn};

use super::{
    check_embed_input, EmbeddingVector, GatewayError, GenerationRequest, GenerationResult, ModelGateway,
    TokenCandidate, TokenLogprobs, TokenPosition,
};

/// The API key is only ever read from this environment variable.
pub const API_KEY_ENV: &str = "MODEL_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub base_url: String,
    pub model_id: String,
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
        }
    }

    /// Joins `path` (e.g. `/chat/completions`) under the `/v1` prefix,
    /// accepting base URLs with or without a trailing `/v1`.
    fn url(&self, path: &str) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}{path}")
        } else {
            format!("{base}/v1{path}")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

pub struct HttpGateway {
    client: Client,
    generation: Endpoint,
    embedding: Endpoint,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpGateway {
    /// Builds a gateway; the API key is taken from `MODEL_API_KEY` if set.
    pub fn new(generation: Endpoint, embedding: Endpoint) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            generation,
            embedding,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn post<T: DeserializeOwned>(&self, url: &str, body: &serde_json::Value) -> Result<T, GatewayError> {
        let mut backoff = self.retry.initial_backoff;
        let mut last_error = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            let mut builder = self.client.post(url).json(body);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Ok(resp) if resp.status().is_success() => {
                    let bytes = resp
                        .bytes()
                        .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
                    return serde_json::from_slice(&bytes)
                        .map_err(|e| GatewayError::MalformedResponse(format!("{url}: {e}")));
                }
                Ok(resp) => {
                    let status = resp.status();
                    let detail = resp.text().unwrap_or_default();
                    last_error = format!("{url}: HTTP {status}: {}", detail.chars().take(300).collect::<String>());
                    if !retryable(status) {
                        return Err(GatewayError::BackendUnavailable(last_error));
                    }
                }
                Err(e) => last_error = format!("{url}: {e}"),
            }
            if attempt < self.retry.attempts {
                warn!(attempt, %last_error, "request failed, retrying");
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(GatewayError::BackendUnavailable(last_error))
    }
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    content: Option<Vec<LogprobEntry>>,
}

#[derive(Deserialize)]
struct LogprobEntry {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TokenCandidate>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: Option<usize>,
    embedding: Vec<f64>,
}

// Servers occasionally report tiny positive logprobs from rounding.
fn clamp_logprob(lp: f64) -> f64 {
    lp.min(0.0)
}

fn parse_chat(resp: ChatResponse, top_k: usize) -> Result<(String, TokenLogprobs), GatewayError> {
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("response has no choices".into()))?;
    let text = choice.message.content.unwrap_or_default();
    let entries = choice
        .logprobs
        .and_then(|l| l.content)
        .ok_or_else(|| GatewayError::LogprobsUnsupported("choices[0].logprobs.content missing".into()))?;
    if entries.is_empty() && !text.is_empty() {
        return Err(GatewayError::LogprobsUnsupported(
            "no per-token logprobs for non-empty output".into(),
        ));
    }
    let mut positions = Vec::with_capacity(entries.len());
    for (t, e) in entries.into_iter().enumerate() {
        if e.top_logprobs.is_empty() {
            return Err(GatewayError::LogprobsUnsupported(format!(
                "position {} has no top_logprobs",
                t + 1
            )));
        }
        let mut candidates: Vec<TokenCandidate> = e
            .top_logprobs
            .into_iter()
            .map(|c| TokenCandidate {
                token: c.token,
                logprob: clamp_logprob(c.logprob),
            })
            .collect();
        candidates.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        candidates.truncate(top_k);
        positions.push(TokenPosition {
            token: e.token,
            logprob: clamp_logprob(e.logprob),
            candidates,
        });
    }
    let tokens = TokenLogprobs::new(positions).map_err(GatewayError::MalformedResponse)?;
    Ok((text, tokens))
}

fn parse_embeddings(
    resp: EmbeddingResponse,
    expected: usize,
    model_id: &str,
) -> Result<Vec<EmbeddingVector>, GatewayError> {
    let mut data = resp.data;
    if data.len() != expected {
        return Err(GatewayError::MalformedResponse(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    if data.iter().all(|d| d.index.is_some()) {
        data.sort_by_key(|d| d.index);
    }
    let dim = data[0].embedding.len();
    data.into_iter()
        .map(|d| {
            if d.embedding.len() != dim || dim == 0 {
                return Err(GatewayError::MalformedResponse("embedding dimensions differ".into()));
            }
            if d.embedding.iter().any(|v| !v.is_finite()) {
                return Err(GatewayError::MalformedResponse("non-finite embedding value".into()));
            }
            Ok(EmbeddingVector {
                values: d.embedding,
                model_id: model_id.to_string(),
            })
        })
        .collect()
}

impl ModelGateway for HttpGateway {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        req.validate()?;
        let model = if req.model_id.is_empty() {
            &self.generation.model_id
        } else {
            &req.model_id
        };
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "logprobs": true,
            "top_logprobs": req.logprob_top_k,
        });
        let started = Instant::now();
        let resp: ChatResponse = self.post(&self.generation.url("/chat/completions"), &body)?;
        let (text, tokens) = parse_chat(resp, req.logprob_top_k as usize)?;
        let latency = started.elapsed();
        debug!(?latency, tokens = tokens.len(), "generation complete");
        Ok(GenerationResult {
            text,
            tokens,
            model_id: model.clone(),
            latency,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        check_embed_input(texts)?;
        let body = json!({ "model": self.embedding.model_id, "input": texts });
        let resp: EmbeddingResponse = self.post(&self.embedding.url("/embeddings"), &body)?;
        parse_embeddings(resp, texts.len(), &self.embedding.model_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_urls() {
        assert_eq!(
            Endpoint::new("http://h:1", "m").url("/embeddings"),
            "http://h:1/v1/embeddings"
        );
        assert_eq!(
            Endpoint::new("http://h:1/v1/", "m").url("/embeddings"),
            "http://h:1/v1/embeddings"
        );
    }

    #[test]
    fn chat_without_logprobs_is_unsupported() {
        let resp: ChatResponse =
            serde_json::from_str(r#"{"choices":[{"message":{"content":"hi"},"logprobs":null}]}"#).unwrap();
        assert!(matches!(
            parse_chat(resp, 10),
            Err(GatewayError::LogprobsUnsupported(_))
        ));
    }

    #[test]
    fn chat_logprobs_parsed_and_truncated() {
        let resp: ChatResponse = serde_json::from_str(
            r#"{"choices":[{"message":{"content":"Hi"},"logprobs":{"content":[
                {"token":"Hi","logprob":1e-7,"top_logprobs":[
                    {"token":"Hello","logprob":-2.0},{"token":"Hi","logprob":0.0},{"token":"Hey","logprob":-3.0}]}]}}]}"#,
        )
        .unwrap();
        let (text, tokens) = parse_chat(resp, 2).unwrap();
        assert_eq!(text, "Hi");
        let pos = &tokens.positions()[0];
        assert_eq!(pos.logprob, 0.0);
        assert_eq!(pos.candidates.len(), 2);
        assert_eq!(pos.candidates[0].token, "Hi");
    }

    #[test]
    fn embeddings_reordered_by_index() {
        let resp: EmbeddingResponse =
            serde_json::from_str(r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#)
                .unwrap();
        let v = parse_embeddings(resp, 2, "e").unwrap();
        assert_eq!(v[0].values, vec![1.0, 0.0]);
    }
}
