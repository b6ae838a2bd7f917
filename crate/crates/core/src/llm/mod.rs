//! Instruction-following LLM access: free-text completion plus per-candidate
//! label scoring.

mod http;
mod mock;
mod retry;

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use http::{logprob_scores, match_fallback, HttpBackend, HttpConfig, TokenLogprob};
pub use mock::{content_words, MockBackend};
pub use retry::RetryPolicy;

/// Score given to candidates that the fallback completion did not name.
pub const FALLBACK_MISS_SCORE: f64 = -1.0e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system_text: Option<String>,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl PromptRequest {
    pub fn new(user_text: impl Into<String>) -> Self {
        PromptRequest {
            system_text: None,
            user_text: user_text.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }

    pub fn with_system(mut self, system_text: impl Into<String>) -> Self {
        self.system_text = Some(system_text.into());
        self
    }

    pub fn with_max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.user_text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("user_text is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest("temperature must be non-negative".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    /// System and user text joined the way they are hashed and logged.
    pub fn full_text(&self) -> String {
        match &self.system_text {
            Some(s) => format!("{s}\n\n{}", self.user_text),
            None => self.user_text.clone(),
        }
    }

    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.full_text().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringPath {
    LogProb,
    FallbackCompletion,
    Mock,
}

/// One finite score per requested candidate, in request order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub scores: IndexMap<String, f64>,
    pub path: ScoringPath,
}

impl ScoreMap {
    pub fn new(path: ScoringPath, scores: impl IntoIterator<Item = (String, f64)>) -> Self {
        ScoreMap {
            scores: scores.into_iter().collect(),
            path,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.scores.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub supports_label_scoring: bool,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("rate limited")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("backend rejected the request ({status}): {message}")]
    BackendRejected { status: u16, message: String },
    #[error("no candidate labels supplied")]
    NoCandidates,
    #[error("candidate `{0}` listed twice")]
    DuplicateCandidate(String),
    #[error("fallback completion `{0}` matches no candidate")]
    UnparseableFallback(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::RateLimited { .. } | BackendError::TransportFailure(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BackendError::TransportFailure(_) => "TransportFailure",
            BackendError::RateLimited { .. } => "RateLimited",
            BackendError::BackendRejected { .. } => "BackendRejected",
            BackendError::NoCandidates => "NoCandidates",
            BackendError::DuplicateCandidate(_) => "DuplicateCandidate",
            BackendError::UnparseableFallback(_) => "UnparseableFallback",
            BackendError::InvalidRequest(_) => "InvalidRequest",
            BackendError::MalformedResponse(_) => "MalformedResponse",
        }
    }
}

pub trait LlmBackend: Send + Sync {
    fn capabilities(&self) -> BackendCapabilities;

    /// Raw model text for `request`; no parsing.
    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError>;

    /// Scores every candidate label as the continuation of `request`.
    fn score_labels(
        &self,
        request: &PromptRequest,
        candidates: &[String],
    ) -> Result<ScoreMap, BackendError>;
}

/// Rejects empty and duplicated candidate lists.
pub fn check_candidates(candidates: &[String]) -> Result<(), BackendError> {
    if candidates.is_empty() {
        return Err(BackendError::NoCandidates);
    }
    let mut seen = HashSet::new();
    for c in candidates {
        if !seen.insert(c.as_str()) {
            return Err(BackendError::DuplicateCandidate(c.clone()));
        }
    }
    Ok(())
}
