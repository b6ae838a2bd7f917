//! Shared domain types: descriptors, categories, the taxonomy and its
//! persistence, documents, confusion matrices and refinement settings.

mod config;
mod matrix;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{AdaptTemplate, RefinementConfig, SamplingStrategy};
pub use matrix::{ConfusionCell, ConfusionMatrix};
pub use store::{load_taxonomy, save_taxonomy};

/// Trims `raw`, collapses every internal whitespace run into a single `_`
/// and keeps letter case. Idempotent.
pub fn normalize_name(raw: &str) -> Result<String> {
    let name = raw.split_whitespace().collect::<Vec<_>>().join("_");
    if name.is_empty() {
        return Err(Error::EmptyName);
    }
    Ok(name)
}

/// Identity key for category names: normalized, then lowercased.
pub fn name_key(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_lowercase()
}

/// A category name paired with its natural-language description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopicDescriptor {
    pub topic_name: String,
    pub topic_description: String,
}

impl TopicDescriptor {
    pub fn new(name: &str, description: &str) -> Result<Self> {
        let topic_name = normalize_name(name)?;
        let topic_description = description.trim().to_string();
        if topic_description.is_empty() {
            return Err(Error::EmptyDescription);
        }
        Ok(TopicDescriptor {
            topic_name,
            topic_description,
        })
    }

    pub fn name(&self) -> &str {
        &self.topic_name
    }

    pub fn description(&self) -> &str {
        &self.topic_description
    }

    /// Compact single-object JSON, the form every prompt consumes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Bootstrap,
    Contrast,
    Refine,
    Adapt,
    Hitl,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Bootstrap => "bootstrap",
            Stage::Contrast => "contrast",
            Stage::Refine => "refine",
            Stage::Adapt => "adapt",
            Stage::Hitl => "hitl",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "generated")]
    Generated,
    #[serde(rename = "user")]
    UserDefined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub stage: Stage,
    pub iteration: u32,
    #[serde(flatten)]
    pub descriptor: TopicDescriptor,
}

/// A taxonomy entry. The current descriptor is always the last history
/// record; history only grows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    provenance: Provenance,
    source_label: Option<String>,
    history: Vec<HistoryEntry>,
}

impl Category {
    fn new(descriptor: TopicDescriptor, provenance: Provenance, stage: Stage, iteration: u32) -> Self {
        Category {
            provenance,
            source_label: None,
            history: vec![HistoryEntry {
                stage,
                iteration,
                descriptor,
            }],
        }
    }

    pub fn descriptor(&self) -> &TopicDescriptor {
        &self.history.last().expect("history is never empty").descriptor
    }

    pub fn name(&self) -> &str {
        self.descriptor().name()
    }

    pub fn description(&self) -> &str {
        self.descriptor().description()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Dataset label this category was bootstrapped from, if any.
    pub fn source_label(&self) -> Option<&str> {
        self.source_label.as_deref()
    }

    /// The label used when scoring against gold data.
    pub fn label(&self) -> &str {
        self.source_label.as_deref().unwrap_or_else(|| self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsert {
    Inserted,
    Updated,
}

/// Ordered set of categories. Order is the classifier's tie-break and is
/// preserved by every operation, including persistence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Taxonomy {
    version: u64,
    categories: Vec<Category>,
}

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name().to_string()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        let key = name_key(name);
        self.categories.iter().position(|c| name_key(c.name()) == key)
    }

    pub fn get(&self, name: &str) -> Option<&Category> {
        self.position(name).map(|i| &self.categories[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    /// Finds the category a gold label refers to: by name first, then by
    /// the dataset label it was bootstrapped from.
    pub fn resolve_label(&self, label: &str) -> Option<&Category> {
        if let Some(c) = self.get(label) {
            return Some(c);
        }
        let key = name_key(label);
        self.categories
            .iter()
            .find(|c| c.source_label.as_deref().map(name_key).as_deref() == Some(key.as_str()))
    }

    /// Appends to an existing category's history (case-insensitive match)
    /// or adds a new generated category at the end.
    pub fn upsert(&mut self, descriptor: TopicDescriptor, stage: Stage, iteration: u32) -> Upsert {
        self.upsert_with(descriptor, stage, iteration, Provenance::Generated)
    }

    /// Like [`Taxonomy::upsert`]; `provenance` applies only on insert.
    pub fn upsert_with(
        &mut self,
        mut descriptor: TopicDescriptor,
        stage: Stage,
        iteration: u32,
        provenance: Provenance,
    ) -> Upsert {
        self.version += 1;
        match self.position(descriptor.name()) {
            Some(i) => {
                let category = &mut self.categories[i];
                // stored spelling wins
                descriptor.topic_name = category.name().to_string();
                category.history.push(HistoryEntry {
                    stage,
                    iteration,
                    descriptor,
                });
                Upsert::Updated
            }
            None => {
                self.categories
                    .push(Category::new(descriptor, provenance, stage, iteration));
                Upsert::Inserted
            }
        }
    }

    /// Adds a brand-new category; fails if the name is taken.
    pub fn insert(
        &mut self,
        descriptor: TopicDescriptor,
        provenance: Provenance,
        stage: Stage,
        iteration: u32,
    ) -> Result<()> {
        if self.contains(descriptor.name()) {
            return Err(Error::DuplicateName(descriptor.topic_name));
        }
        self.upsert_with(descriptor, stage, iteration, provenance);
        Ok(())
    }

    pub fn set_source_label(&mut self, name: &str, label: &str) -> Result<()> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))?;
        self.categories[i].source_label = Some(label.to_string());
        Ok(())
    }

    pub(crate) fn from_parts(version: u64, categories: Vec<Category>) -> Self {
        Taxonomy {
            version,
            categories,
        }
    }
}

/// An input text, optionally carrying its gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            gold_label: None,
        }
    }

    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            gold_label: Some(label.into()),
        }
    }
}
