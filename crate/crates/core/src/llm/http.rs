//! Chat-completions HTTP client.
//!
//! Label scoring prefers token log-probabilities: the score of a candidate is
//! the mean log-probability of the tokens spelling its name right after the
//! prompt. Endpoints that return no log-probabilities fall back to matching a
//! single constrained completion against the candidate names.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    check_candidates, BackendCapabilities, BackendError, LlmBackend, PromptRequest, RetryPolicy, ScoreMap,
    ScoringPath, FALLBACK_MISS_SCORE,
};
use crate::model::name_key;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Server root; requests go to `{base_url}/v1/chat/completions`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    /// Cap on in-flight requests shared by all callers of one backend.
    pub max_concurrent: usize,
    pub retry: RetryPolicy,
    /// Ask for token log-probabilities when scoring labels.
    pub use_logprobs: bool,
    pub top_logprobs: u8,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_concurrent: 4,
            retry: RetryPolicy::default(),
            use_logprobs: true,
            top_logprobs: 20,
        }
    }

    /// Reads `LLM_BASE_URL`, `LLM_MODEL` and the optional `LLM_API_KEY`.
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let base = var("LLM_BASE_URL").ok_or_else(|| BackendError::InvalidRequest("LLM_BASE_URL is not set".into()))?;
        let model = var("LLM_MODEL").ok_or_else(|| BackendError::InvalidRequest("LLM_MODEL is not set".into()))?;
        let mut config = HttpConfig::new(base, model);
        config.api_key = var("LLM_API_KEY");
        Ok(config)
    }
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    permits: Semaphore,
    logprobs_rejected: AtomicBool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

/// One generated token with its log-probability and the most likely
/// alternatives at that position.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ChatReply {
    pub content: String,
    pub logprobs: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

pub(crate) fn parse_chat_reply(body: &str) -> Result<ChatReply, BackendError> {
    let resp: ChatResponse =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::MalformedResponse("response has no choices".into()))?;
    Ok(ChatReply {
        content: choice.message.content.unwrap_or_default(),
        logprobs: choice.logprobs.and_then(|l| l.content).filter(|v| !v.is_empty()),
    })
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.chars().take(300).collect())
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            permits: Semaphore::new(config.max_concurrent),
            agent,
            config,
            logprobs_rejected: AtomicBool::new(false),
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, request: &PromptRequest, logprobs: bool) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &request.system_text {
            messages.push(json!({ "role": "system", "content": system }));
        }
        messages.push(json!({ "role": "user", "content": request.user_text }));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.config.top_logprobs);
        }
        body
    }

    fn send_once(&self, body: &Value) -> Result<ChatReply, BackendError> {
        let url = format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = req
            .send_json(body)
            .map_err(|e| BackendError::TransportFailure(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after_secs = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| BackendError::TransportFailure(e.to_string()))?;
        match status {
            200..=299 => parse_chat_reply(&text),
            429 => Err(BackendError::RateLimited { retry_after_secs }),
            400..=499 => Err(BackendError::BackendRejected {
                status,
                message: error_message(&text),
            }),
            _ => Err(BackendError::TransportFailure(format!("HTTP {status}: {}", error_message(&text)))),
        }
    }

    fn send(&self, request: &PromptRequest, logprobs: bool) -> Result<ChatReply, BackendError> {
        let body = self.body(request, logprobs);
        let _permit = self.permits.acquire();
        self.config.retry.run(|| self.send_once(&body))
    }
}

impl LlmBackend for HttpBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_label_scoring: self.config.use_logprobs && !self.logprobs_rejected.load(Ordering::Relaxed),
            model_id: self.config.model.clone(),
        }
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        request.validate()?;
        Ok(self.send(request, false)?.content)
    }

    fn score_labels(&self, request: &PromptRequest, candidates: &[String]) -> Result<ScoreMap, BackendError> {
        request.validate()?;
        check_candidates(candidates)?;

        let want_logprobs = self.config.use_logprobs && !self.logprobs_rejected.load(Ordering::Relaxed);
        let reply = if want_logprobs {
            match self.send(request, true) {
                Err(BackendError::BackendRejected { status: 400, message }) => {
                    tracing::warn!(%message, "endpoint rejected logprobs; using completion fallback");
                    self.logprobs_rejected.store(true, Ordering::Relaxed);
                    self.send(request, false)?
                }
                other => other?,
            }
        } else {
            self.send(request, false)?
        };

        if let Some(tokens) = &reply.logprobs {
            return Ok(ScoreMap {
                scores: logprob_scores(tokens, candidates),
                path: ScoringPath::LogProb,
            });
        }

        let winner = match_fallback(&reply.content, candidates)
            .ok_or_else(|| BackendError::UnparseableFallback(reply.content.clone()))?;
        let scores = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), if i == winner { 0.0 } else { FALLBACK_MISS_SCORE }))
            .collect();
        Ok(ScoreMap {
            scores,
            path: ScoringPath::FallbackCompletion,
        })
    }
}

fn is_filler(token: &str) -> bool {
    token
        .chars()
        .all(|c| c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '*'))
}

/// Length-normalized log-probability of each candidate name along the
/// generated token path.
///
/// Tokens are compared case-insensitively with whitespace read as `_`.
/// Where the path diverges from a candidate, the best listed alternative
/// that continues the name is used once; anything still unspelled costs the
/// lowest log-probability listed at that position.
pub fn logprob_scores(tokens: &[TokenLogprob], candidates: &[String]) -> IndexMap<String, f64> {
    let start = tokens.iter().position(|t| !is_filler(&t.token)).unwrap_or(tokens.len());
    let path = &tokens[start..];
    let floor_at = |t: &TokenLogprob| t.top_logprobs.iter().map(|a| a.logprob).fold(t.logprob, f64::min);
    let last_floor = tokens.last().map(floor_at).unwrap_or(FALLBACK_MISS_SCORE);

    candidates
        .iter()
        .map(|name| {
            let target = name.to_lowercase();
            let mut rest = target.as_str();
            let mut sum = 0.0;
            let mut n = 0u32;
            for pos in path {
                if rest.is_empty() {
                    break;
                }
                let norm = |t: &str| {
                    let t = if n == 0 { t.trim_start() } else { t };
                    t.to_lowercase().replace(char::is_whitespace, "_")
                };
                let generated = norm(&pos.token);
                if !generated.is_empty() && rest.starts_with(&generated) {
                    sum += pos.logprob;
                    n += 1;
                    rest = &rest[generated.len()..];
                    continue;
                }
                let alternative = pos
                    .top_logprobs
                    .iter()
                    .filter_map(|a| {
                        let s = norm(&a.token);
                        (!s.is_empty() && rest.starts_with(&s)).then_some((s.len(), a.logprob))
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((len, lp)) = alternative {
                    sum += lp;
                    n += 1;
                    rest = &rest[len..];
                }
                if !rest.is_empty() {
                    sum += floor_at(pos);
                    n += 1;
                    rest = "";
                }
                break;
            }
            if !rest.is_empty() {
                sum += last_floor;
                n += 1;
            }
            (name.clone(), sum / f64::from(n.max(1)))
        })
        .collect()
}

/// Index of the candidate a free-text completion names, if any.
///
/// The first non-empty line, stripped of quotes, backticks, asterisks and
/// trailing periods, must equal a candidate after normalization. Failing
/// that, the longest candidate whose normalized name occurs in the text wins
/// when it is unique.
pub fn match_fallback(text: &str, candidates: &[String]) -> Option<usize> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let cleaned = first.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '*' | '.'));
    let key = name_key(cleaned);
    if let Some(i) = candidates.iter().position(|c| name_key(c) == key) {
        return Some(i);
    }
    let whole = name_key(text);
    let mut hits: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let k = name_key(c);
            (!k.is_empty() && whole.contains(&k)).then_some((k.len(), i))
        })
        .collect();
    hits.sort_unstable_by_key(|h| std::cmp::Reverse(h.0));
    match hits.as_slice() {
        [] => None,
        [(_, i)] => Some(*i),
        [(l0, i), (l1, _), ..] if l0 > l1 => Some(*i),
        _ => None,
    }
}
