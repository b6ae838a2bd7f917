use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetKind, AGNEWS_LABELS, DBPEDIA_LABELS};
use crate::error::{Error, Result};
use crate::model::{name_key, Document};

/// Which classes are seen during refinement, which are introduced later,
/// and how many documents each split gets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub dataset: DatasetKind,
    pub path: PathBuf,
    pub seen_labels: Vec<String>,
    pub unseen_labels: Vec<String>,
    pub n_bootstrap: usize,
    pub m_validate: usize,
    pub test_per_class: usize,
    pub seed: u64,
    /// Example documents handed to each unseen topic when it is added.
    pub unseen_exemplars: usize,
    /// User descriptions for unseen classes; missing ones default to
    /// "Documents about <label>."
    pub unseen_descriptions: BTreeMap<String, String>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            dataset: DatasetKind::GenericCsv,
            path: PathBuf::new(),
            seen_labels: Vec::new(),
            unseen_labels: Vec::new(),
            n_bootstrap: 20,
            m_validate: 25,
            test_per_class: 100,
            seed: 0,
            unseen_exemplars: 0,
            unseen_descriptions: BTreeMap::new(),
        }
    }
}

impl ExperimentPlan {
    /// Three seen classes, Sci/Tech held out.
    pub fn agnews(path: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            dataset: DatasetKind::Agnews,
            path: path.into(),
            seen_labels: AGNEWS_LABELS[..3].iter().map(|s| s.to_string()).collect(),
            unseen_labels: vec![AGNEWS_LABELS[3].to_string()],
            ..Self::default()
        }
    }

    /// Eight seen classes, the last listed class held out.
    pub fn dbpedia(path: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            dataset: DatasetKind::Dbpedia,
            path: path.into(),
            seen_labels: DBPEDIA_LABELS[..8].iter().map(|s| s.to_string()).collect(),
            unseen_labels: vec![DBPEDIA_LABELS[13].to_string()],
            ..Self::default()
        }
    }

    /// Reads a JSON plan; a relative dataset path is taken relative to the
    /// plan file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan: ExperimentPlan =
            serde_json::from_str(&text).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        if plan.path.is_relative() {
            if let Some(dir) = path.parent() {
                plan.path = dir.join(&plan.path);
            }
        }
        Ok(plan)
    }

    pub fn description_for(&self, label: &str) -> String {
        self.unseen_descriptions
            .get(label)
            .cloned()
            .unwrap_or_else(|| format!("Documents about {label}."))
    }

    /// Checks the plan on its own and, when given, against the labels
    /// present in the data.
    pub fn validate(&self, available: Option<&[String]>) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if self.seen_labels.len() < 2 {
            return bad("at least two seen labels are required".into());
        }
        if self.n_bootstrap == 0 || self.m_validate == 0 || self.test_per_class == 0 {
            return bad("split sizes must be positive".into());
        }
        let mut keys = HashSet::new();
        for l in self.seen_labels.iter().chain(&self.unseen_labels) {
            if !keys.insert(name_key(l)) {
                return bad(format!("label `{l}` is listed twice or is both seen and unseen"));
            }
        }
        let known: Vec<String> = match (self.dataset.labels(), available) {
            (Some(fixed), _) => fixed.iter().map(|s| s.to_string()).collect(),
            (None, Some(found)) => found.to_vec(),
            (None, None) => return Ok(()),
        };
        for l in self.seen_labels.iter().chain(&self.unseen_labels) {
            if !known.contains(l) {
                return bad(format!("label `{l}` is not in the dataset"));
            }
        }
        Ok(())
    }
}

/// Disjoint per-class document sets for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    /// Bootstrap samples per seen class, in plan order.
    pub seen_train: Vec<(String, Vec<Document>)>,
    pub seen_validate: Vec<Document>,
    pub seen_test: Vec<Document>,
    pub unseen_test: Vec<Document>,
    /// Exemplars per unseen class; empty lists unless the plan asks for them.
    pub unseen_bootstrap: Vec<(String, Vec<Document>)>,
}

/// Seeded, disjoint split of `docs` according to `plan`.
pub fn split_seen_unseen(docs: &[Document], plan: &ExperimentPlan) -> Result<Splits> {
    let mut by_label: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
    for d in docs {
        if let Some(l) = d.gold_label.as_deref() {
            by_label.entry(l).or_default().push(d);
        }
    }
    let available: Vec<String> = by_label.keys().map(|s| s.to_string()).collect();
    plan.validate(Some(&available))?;

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut draw = |label: &str, sizes: &[usize]| -> Result<Vec<Vec<Document>>> {
        let pool = by_label.get(label).map_or(&[][..], Vec::as_slice);
        let needed: usize = sizes.iter().sum();
        if pool.len() < needed {
            return Err(Error::InsufficientDocs {
                class: label.to_string(),
                needed,
                available: pool.len(),
            });
        }
        let picked = rand::seq::index::sample(&mut rng, pool.len(), needed).into_vec();
        let mut parts = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &n in sizes {
            parts.push(picked[start..start + n].iter().map(|&i| pool[i].clone()).collect());
            start += n;
        }
        Ok(parts)
    };

    let mut splits = Splits {
        seen_train: Vec::new(),
        seen_validate: Vec::new(),
        seen_test: Vec::new(),
        unseen_test: Vec::new(),
        unseen_bootstrap: Vec::new(),
    };
    for label in &plan.seen_labels {
        let mut parts = draw(label, &[plan.n_bootstrap, plan.m_validate, plan.test_per_class])?.into_iter();
        let (train, validate, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
        splits.seen_train.push((label.clone(), train));
        splits.seen_validate.extend(validate);
        splits.seen_test.extend(test);
    }
    for label in &plan.unseen_labels {
        let mut parts = draw(label, &[plan.test_per_class, plan.unseen_exemplars])?.into_iter();
        splits.unseen_test.extend(parts.next().unwrap());
        splits.unseen_bootstrap.push((label.clone(), parts.next().unwrap()));
    }
    Ok(splits)
}
