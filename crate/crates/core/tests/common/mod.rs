//! Backends with scripted behavior, shared by integration test targets.
#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use tagforge::llm::{BackendCapabilities, BackendError, LlmBackend, PromptRequest, ScoreMap, ScoringPath};
use tagforge::model::{Document, Stage, Taxonomy, TopicDescriptor};

pub type ReplyFn = Box<dyn Fn(&PromptRequest) -> String + Send + Sync>;

pub const PLAIN_REPLY: &str = r#"{"topic_name": "Anything", "topic_description": "A scripted description."}"#;

/// Classifies validation documents built by [`validation_docs`] so that
/// class `c` in validation round `r` scores `schedule[r][c]` (the last row
/// repeats). Wrong predictions go to the next category in prompt order.
/// A round is one classification of every document.
pub struct ScriptedBackend {
    classes: Vec<String>,
    per_class: usize,
    schedule: Vec<Vec<f64>>,
    calls: AtomicUsize,
    reply: ReplyFn,
}

impl ScriptedBackend {
    pub fn new(classes: &[String], per_class: usize, schedule: Vec<Vec<f64>>) -> Self {
        assert!(!schedule.is_empty());
        ScriptedBackend {
            classes: classes.to_vec(),
            per_class,
            schedule,
            calls: AtomicUsize::new(0),
            reply: Box::new(|_| PLAIN_REPLY.to_string()),
        }
    }

    pub fn with_reply(mut self, reply: ReplyFn) -> Self {
        self.reply = reply;
        self
    }

    pub fn classifications(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Number of correct documents out of `per_class` for accuracy `a`.
    pub fn correct_count(&self, accuracy: f64) -> usize {
        (accuracy * self.per_class as f64).round() as usize
    }
}

pub fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("C{i}")).collect()
}

pub fn validation_docs(classes: &[String], per_class: usize) -> Vec<Document> {
    let mut docs = Vec::new();
    for c in classes {
        for i in 0..per_class {
            docs.push(Document::labeled(format!("{c}-{i}"), format!("item {c} {i}"), c.clone()));
        }
    }
    docs
}

pub fn taxonomy_of(names: &[String]) -> Taxonomy {
    let mut t = Taxonomy::new();
    for n in names {
        t.upsert(
            TopicDescriptor::new(n, &format!("Documents of class {n}.")).unwrap(),
            Stage::Bootstrap,
            0,
        );
    }
    t
}

impl LlmBackend for ScriptedBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_label_scoring: true,
            model_id: "scripted".into(),
        }
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        Ok((self.reply)(request))
    }

    fn score_labels(&self, request: &PromptRequest, candidates: &[String]) -> Result<ScoreMap, BackendError> {
        let text = request.full_text();
        let item = text
            .rfind("item ")
            .map(|i| &text[i + 5..])
            .and_then(|rest| rest.lines().next())
            .ok_or_else(|| BackendError::InvalidRequest("not a scripted document".into()))?;
        let mut parts = item.split_whitespace();
        let class = parts.next().unwrap_or_default();
        let index: usize = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0);
        let class_pos = self.classes.iter().position(|c| c == class).unwrap_or(0);

        let per_round = self.classes.len() * self.per_class;
        let round = self.calls.fetch_add(1, Ordering::SeqCst) / per_round.max(1);
        let row = &self.schedule[round.min(self.schedule.len() - 1)];
        let correct = index < self.correct_count(row[class_pos]);

        let gold = candidates.iter().position(|c| c == class).unwrap_or(0);
        let winner = if correct { gold } else { (gold + 1) % candidates.len() };
        Ok(ScoreMap::new(
            ScoringPath::Mock,
            candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (c.clone(), if i == winner { 1.0 } else { 0.0 })),
        ))
    }
}

/// Returns whatever scores were last stored, one per candidate in order.
pub struct FixedScores {
    scores: Mutex<Vec<f64>>,
}

impl FixedScores {
    pub fn new() -> Self {
        FixedScores {
            scores: Mutex::new(Vec::new()),
        }
    }

    pub fn set(&self, scores: Vec<f64>) {
        *self.scores.lock().unwrap() = scores;
    }
}

impl LlmBackend for FixedScores {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_label_scoring: true,
            model_id: "fixed".into(),
        }
    }

    fn complete(&self, _request: &PromptRequest) -> Result<String, BackendError> {
        Ok(PLAIN_REPLY.to_string())
    }

    fn score_labels(&self, _request: &PromptRequest, candidates: &[String]) -> Result<ScoreMap, BackendError> {
        let scores = self.scores.lock().unwrap();
        Ok(ScoreMap::new(
            ScoringPath::Mock,
            candidates.iter().cloned().zip(scores.iter().copied()),
        ))
    }
}
