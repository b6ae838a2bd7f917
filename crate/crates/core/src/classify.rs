use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::llm::{BackendError, ScoreMap, ScoringPath};
use crate::model::{Document, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub document_id: String,
    pub predicted: String,
    pub scores: ScoreMap,
    pub scoring_path: ScoringPath,
}

/// Index into `order` of the best score. Ties go to the earliest name;
/// names missing from `scores` are skipped.
pub fn argmax_in_order(order: &[String], scores: &ScoreMap) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, name) in order.iter().enumerate() {
        let Some(s) = scores.get(name) else { continue };
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

impl Engine {
    /// Scores every category for `document` and returns the best one.
    pub fn classify(&self, document: &Document, taxonomy: &Taxonomy) -> Result<ClassificationResult> {
        if taxonomy.is_empty() {
            return Err(Error::EmptyTaxonomy);
        }
        if document.text.trim().is_empty() {
            return Err(Error::Precondition(format!("document `{}` has no text", document.id)));
        }
        let request = self.templates().classify_request(&document.text, taxonomy)?;
        let chars = request.full_text().chars().count();
        let budget = self.options().max_prompt_chars;
        if chars > budget {
            return Err(Error::ContextBudgetExceeded { chars, budget });
        }
        let names = taxonomy.names();
        let failed = |reason: String| Error::ClassificationFailed {
            id: document.id.clone(),
            reason,
        };
        let scores = self.backend().score_labels(&request, &names).map_err(|e| match e {
            BackendError::UnparseableFallback(text) => failed(format!("reply names no category: {text:?}")),
            other => other.into(),
        })?;
        if scores.len() != names.len() || names.iter().any(|n| !scores.get(n).is_some_and(f64::is_finite)) {
            return Err(failed("backend returned an incomplete score map".into()));
        }
        let best = argmax_in_order(&names, &scores).expect("non-empty taxonomy");
        Ok(ClassificationResult {
            document_id: document.id.clone(),
            predicted: names[best].clone(),
            scoring_path: scores.path,
            scores,
        })
    }

    /// Classifies each document independently; results keep input order and
    /// a failure only fills its own slot.
    pub fn classify_batch(&self, documents: &[Document], taxonomy: &Taxonomy) -> Vec<Result<ClassificationResult>> {
        self.map(documents, |d| self.classify(d, taxonomy))
    }
}
