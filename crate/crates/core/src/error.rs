use std::path::PathBuf;

use crate::llm::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("category name is empty after normalization")]
    EmptyName,

    #[error("topic description is empty")]
    EmptyDescription,

    #[error("i/o failure on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("template placeholder `{0}` is not bound")]
    UnboundPlaceholder(String),

    #[error("no topic descriptor in completion: {0}")]
    ParseFailure(String),

    #[error("no documents to sample from")]
    NoDocuments,

    #[error("contrast reply matched none of the existing categories")]
    ContrastDroppedAll,

    #[error("document `{0}` has a gold label that matches no category")]
    UnknownGoldLabel(String),

    #[error("no misclassified samples for pair {correct} -> {wrong}")]
    MissingSamples { correct: String, wrong: String },

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("category `{0}` already exists")]
    DuplicateName(String),

    #[error("taxonomy has no categories")]
    EmptyTaxonomy,

    #[error("classification of document `{id}` failed: {reason}")]
    ClassificationFailed { id: String, reason: String },

    #[error("classification prompt is {chars} characters, over the budget of {budget}")]
    ContextBudgetExceeded { chars: usize, budget: usize },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("class `{class}` needs {needed} documents but only {available} are available")]
    InsufficientDocs {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyName => "EmptyName",
            Error::EmptyDescription => "EmptyDescription",
            Error::Io { .. } => "IoFailure",
            Error::SchemaViolation(_) => "SchemaViolation",
            Error::Backend(e) => e.kind(),
            Error::UnboundPlaceholder(_) => "UnboundPlaceholder",
            Error::ParseFailure(_) => "ParseFailure",
            Error::NoDocuments => "NoDocuments",
            Error::ContrastDroppedAll => "ContrastDroppedAll",
            Error::UnknownGoldLabel(_) => "UnknownGoldLabel",
            Error::MissingSamples { .. } => "MissingSamples",
            Error::UnknownCategory(_) => "UnknownCategory",
            Error::DuplicateName(_) => "DuplicateName",
            Error::EmptyTaxonomy => "EmptyTaxonomy",
            Error::ClassificationFailed { .. } => "ClassificationFailed",
            Error::ContextBudgetExceeded { .. } => "ContextBudgetExceeded",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::InsufficientDocs { .. } => "InsufficientDocs",
            Error::InvalidPlan(_) => "InvalidPlan",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Precondition(_) => "Precondition",
        }
    }
}
