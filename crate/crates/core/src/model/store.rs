use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{name_key, normalize_name, Category, HistoryEntry, Provenance, Taxonomy, TopicDescriptor};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    version: u64,
    categories: Vec<CategoryFile>,
}

#[derive(Serialize, Deserialize)]
struct CategoryFile {
    topic_name: String,
    topic_description: String,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_label: Option<String>,
    history: Vec<HistoryEntry>,
}

impl Taxonomy {
    pub fn to_json(&self) -> String {
        let file = TaxonomyFile {
            version: self.version,
            categories: self
                .categories
                .iter()
                .map(|c| CategoryFile {
                    topic_name: c.name().to_string(),
                    topic_description: c.description().to_string(),
                    provenance: c.provenance,
                    source_label: c.source_label.clone(),
                    history: c.history.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("taxonomy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaxonomyFile =
            serde_json::from_str(text).map_err(|e| Error::SchemaViolation(e.to_string()))?;
        let mut seen = HashSet::new();
        let mut categories = Vec::with_capacity(file.categories.len());
        for c in file.categories {
            let current = checked(&c.topic_name, &c.topic_description)?;
            if !seen.insert(name_key(&current.topic_name)) {
                return Err(Error::SchemaViolation(format!(
                    "duplicate category name `{}`",
                    current.topic_name
                )));
            }
            let Some(last) = c.history.last() else {
                return Err(Error::SchemaViolation(format!(
                    "category `{}` has an empty history",
                    current.topic_name
                )));
            };
            for h in &c.history {
                checked(&h.descriptor.topic_name, &h.descriptor.topic_description)?;
            }
            if last.descriptor != current {
                return Err(Error::SchemaViolation(format!(
                    "category `{}` does not match its last history entry",
                    current.topic_name
                )));
            }
            categories.push(Category {
                provenance: c.provenance,
                source_label: c.source_label,
                history: c.history,
            });
        }
        Ok(Taxonomy::from_parts(file.version, categories))
    }
}

fn checked(name: &str, description: &str) -> Result<TopicDescriptor> {
    let normalized = normalize_name(name).map_err(|_| Error::SchemaViolation("empty topic_name".into()))?;
    if normalized != name {
        return Err(Error::SchemaViolation(format!("topic_name `{name}` is not normalized")));
    }
    if description.trim().is_empty() {
        return Err(Error::SchemaViolation(format!("`{name}` has an empty description")));
    }
    Ok(TopicDescriptor {
        topic_name: name.to_string(),
        topic_description: description.to_string(),
    })
}

pub fn save_taxonomy(taxonomy: &Taxonomy, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, taxonomy.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Taxonomy::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Stage;

    fn sample() -> Taxonomy {
        let mut t = Taxonomy::new();
        for (n, d) in [("A", "alpha"), ("B", "beta"), ("C", "gamma")] {
            t.upsert(TopicDescriptor::new(n, d).unwrap(), Stage::Bootstrap, 0);
        }
        t.upsert(TopicDescriptor::new("B", "beta two").unwrap(), Stage::Refine, 1);
        t.set_source_label("C", "Sci/Tech").unwrap();
        t
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tax.json");
        let t = sample();
        save_taxonomy(&t, &path).unwrap();
        assert_eq!(load_taxonomy(&path).unwrap(), t);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let text = r#"{"version": 2, "categories": [
            {"topic_name": "A", "topic_description": "x", "provenance": "generated",
             "history": [{"stage": "bootstrap", "iteration": 0, "topic_name": "A", "topic_description": "x"}]},
            {"topic_name": "a", "topic_description": "y", "provenance": "user",
             "history": [{"stage": "hitl", "iteration": 0, "topic_name": "a", "topic_description": "y"}]}
        ]}"#;
        assert!(matches!(Taxonomy::from_json(text), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn older_version_field_is_preserved() {
        let text = r#"{"version": 1, "categories": [
            {"topic_name": "A", "topic_description": "x", "provenance": "generated",
             "history": [{"stage": "bootstrap", "iteration": 0, "topic_name": "A", "topic_description": "x"}]}
        ]}"#;
        let t = Taxonomy::from_json(text).unwrap();
        assert_eq!(t.version(), 1);
        assert_eq!(t.names(), ["A"]);
    }

    #[test]
    fn malformed_files_are_schema_violations() {
        for text in [
            "not json",
            r#"{"version": 1}"#,
            r#"{"version": 1, "categories": [{"topic_name": "A", "topic_description": "x", "provenance": "generated", "history": []}]}"#,
            r#"{"version": 1, "categories": [{"topic_name": "A", "topic_description": "x", "provenance": "generated",
                "history": [{"stage": "bogus", "iteration": 0, "topic_name": "A", "topic_description": "x"}]}]}"#,
            r#"{"version": 1, "categories": [{"topic_name": "A", "topic_description": "x", "provenance": "generated",
                "history": [{"stage": "refine", "iteration": 0, "topic_name": "A", "topic_description": "old"}]}]}"#,
        ] {
            assert!(matches!(Taxonomy::from_json(text), Err(Error::SchemaViolation(_))), "{text}");
        }
    }

    #[test]
    fn missing_file_is_io_failure() {
        assert!(matches!(load_taxonomy("/nonexistent/tax.json"), Err(Error::Io { .. })));
    }
}
