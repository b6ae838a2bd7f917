//! Validate a taxonomy against labeled samples, rewrite the descriptions of
//! categories that fall short, and sharpen pairs of categories that get
//! confused with each other.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::describe::{sample_bootstrap, SamplePlan};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{
    name_key, AdaptTemplate, Category, ConfusionMatrix, Document, RefinementConfig, SamplingStrategy, Stage, Taxonomy,
    TopicDescriptor,
};
use crate::prompt::{descriptor_list, extract_descriptor, sample_block, Bindings, TemplateId};
use crate::runlog::LogEvent;

/// Classification results of one validation pass, keyed by category name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationOutcome {
    pub matrix: ConfusionMatrix,
    pub per_category_accuracy: BTreeMap<String, f64>,
    /// Gold category name to the documents predicted elsewhere, with the
    /// predicted name.
    pub misclassified: BTreeMap<String, Vec<(Document, String)>>,
    pub correct: BTreeMap<String, Vec<Document>>,
    /// Categories that had no validation documents.
    pub missing: Vec<String>,
}

impl ValidationOutcome {
    /// Lowest per-category accuracy; 1.0 when nothing was validated.
    pub fn min_accuracy(&self) -> f64 {
        self.per_category_accuracy.values().copied().fold(1.0, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub correct: String,
    pub wrong: String,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ThresholdMet,
    MaxIterations,
}

/// One validation pass and the edits made in response to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub accuracy: BTreeMap<String, f64>,
    pub min_accuracy: f64,
    pub refined: Vec<String>,
    pub adapted: Vec<ConfusionPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    /// Rounds in which descriptions were rewritten.
    pub iterations_run: u32,
    pub per_iteration: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

impl RefinementReport {
    pub fn final_min_accuracy(&self) -> f64 {
        self.per_iteration.last().map_or(1.0, |r| r.min_accuracy)
    }
}

/// A loop that stopped on an error, with the work done until then.
#[derive(Debug)]
pub struct RefineFailure {
    pub error: Error,
    pub taxonomy: Taxonomy,
    pub completed: Vec<IterationRecord>,
}

impl fmt::Display for RefineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "refinement stopped after {} validations: {}", self.completed.len(), self.error)
    }
}

impl std::error::Error for RefineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<RefineFailure> for Error {
    fn from(f: RefineFailure) -> Self {
        f.error
    }
}

/// Off-diagonal cells with at least `min_count` entries, largest first, ties
/// by (gold, predicted) name, at most `top_k`.
pub fn mine_confusion_pairs(matrix: &ConfusionMatrix, min_count: u64, top_k: usize) -> Vec<ConfusionPair> {
    let mut pairs: Vec<ConfusionPair> = matrix
        .cells()
        .filter(|c| c.gold != c.predicted && c.count >= min_count)
        .map(|c| ConfusionPair {
            correct: c.gold,
            wrong: c.predicted,
            count: c.count,
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.correct.cmp(&b.correct))
            .then_with(|| a.wrong.cmp(&b.wrong))
    });
    pairs.truncate(top_k);
    pairs
}

fn texts<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Vec<&'a str> {
    docs.into_iter().map(|d| d.text.as_str()).collect()
}

impl Engine {
    /// Classifies every validation document against `taxonomy`.
    pub fn validate_category_set(&self, taxonomy: &Taxonomy, documents: &[Document]) -> Result<ValidationOutcome> {
        self.validate_at(taxonomy, documents, 0)
    }

    fn validate_at(&self, taxonomy: &Taxonomy, documents: &[Document], iteration: u32) -> Result<ValidationOutcome> {
        let mut gold = Vec::with_capacity(documents.len());
        for d in documents {
            let category = d
                .gold_label
                .as_deref()
                .and_then(|l| taxonomy.resolve_label(l))
                .ok_or_else(|| Error::UnknownGoldLabel(d.id.clone()))?;
            gold.push(category.name().to_string());
        }

        let mut out = ValidationOutcome::default();
        for ((doc, gold), result) in documents.iter().zip(gold).zip(self.classify_batch(documents, taxonomy)) {
            let predicted = result?.predicted;
            out.matrix.record(&gold, &predicted);
            if predicted == gold {
                out.correct.entry(gold).or_default().push(doc.clone());
            } else {
                out.misclassified.entry(gold).or_default().push((doc.clone(), predicted));
            }
        }
        for c in taxonomy.categories() {
            match out.matrix.accuracy_of(c.name()) {
                Some(a) => {
                    out.per_category_accuracy.insert(c.name().to_string(), a);
                    self.log()
                        .record(LogEvent::new("validate", iteration).category(c.name()).accuracy(a));
                }
                None => out.missing.push(c.name().to_string()),
            }
        }
        if !out.missing.is_empty() {
            tracing::warn!(missing = ?out.missing, "categories without validation documents");
        }
        Ok(out)
    }

    /// Rewrites `category`'s description from its correctly and wrongly
    /// classified samples. The category keeps its name whatever the reply
    /// says.
    pub fn refine_description(
        &self,
        category: &Category,
        right: &[Document],
        wrong: &[(Document, String)],
    ) -> Result<TopicDescriptor> {
        self.refine_at(category, right, wrong, 0)
    }

    fn refine_at(
        &self,
        category: &Category,
        right: &[Document],
        wrong: &[(Document, String)],
        iteration: u32,
    ) -> Result<TopicDescriptor> {
        if wrong.is_empty() {
            return Err(Error::Precondition(format!(
                "refining `{}` needs misclassified samples",
                category.name()
            )));
        }
        self.misclass_prompt(
            category.descriptor(),
            &texts(right),
            &texts(wrong.iter().map(|(d, _)| d)),
            LogEvent::new(Stage::Refine, iteration),
        )
    }

    /// Runs the misclassification prompt for `current` and returns the
    /// reply's description under `current`'s name.
    pub(crate) fn misclass_prompt(
        &self,
        current: &TopicDescriptor,
        right: &[&str],
        wrong: &[&str],
        event: LogEvent,
    ) -> Result<TopicDescriptor> {
        let budget = self.options().sample_chars;
        let bindings = Bindings::new()
            .set("df_subset_right", sample_block(right.iter().copied(), budget))
            .set("df_subset_wrong", sample_block(wrong.iter().copied(), budget))
            .set("correct_category", current.name())
            .set("category_list", descriptor_list([current]));
        let request = self.templates().render(TemplateId::MisclassRefine, &bindings)?;
        let event = event.category(current.name());
        let reply = self.complete_parsed(event.clone(), &request, extract_descriptor)?;
        Ok(self.keep_name(current.name(), reply, event))
    }

    fn keep_name(&self, name: &str, mut reply: TopicDescriptor, event: LogEvent) -> TopicDescriptor {
        if name_key(reply.name()) != name_key(name) {
            tracing::info!(kept = %name, proposed = %reply.name(), "reply renamed the category; name kept");
            self.log()
                .record(event.note(format!("reply renamed the category to `{}`; name kept", reply.name())));
        }
        reply.topic_name = name.to_string();
        reply
    }

    /// Sharpens `pair.correct` against `pair.wrong` using the samples of
    /// `outcome` and returns the updated taxonomy.
    pub fn adapt_pair(
        &self,
        pair: &ConfusionPair,
        outcome: &ValidationOutcome,
        taxonomy: &Taxonomy,
        template: AdaptTemplate,
    ) -> Result<Taxonomy> {
        self.adapt_at(pair, outcome, taxonomy, template, 0)
    }

    fn adapt_at(
        &self,
        pair: &ConfusionPair,
        outcome: &ValidationOutcome,
        taxonomy: &Taxonomy,
        template: AdaptTemplate,
        iteration: u32,
    ) -> Result<Taxonomy> {
        let correct = taxonomy
            .get(&pair.correct)
            .ok_or_else(|| Error::UnknownCategory(pair.correct.clone()))?;
        let wrong = taxonomy
            .get(&pair.wrong)
            .ok_or_else(|| Error::UnknownCategory(pair.wrong.clone()))?;
        if name_key(correct.name()) == name_key(wrong.name()) {
            return Err(Error::Precondition("a confusion pair needs two distinct categories".into()));
        }
        let wrong_key = name_key(wrong.name());
        let missed: Vec<&str> = outcome
            .misclassified
            .get(correct.name())
            .into_iter()
            .flatten()
            .filter(|(_, p)| name_key(p) == wrong_key)
            .map(|(d, _)| d.text.as_str())
            .collect();
        if missed.is_empty() {
            return Err(Error::MissingSamples {
                correct: correct.name().to_string(),
                wrong: wrong.name().to_string(),
            });
        }
        let right = texts(outcome.correct.get(correct.name()).into_iter().flatten());

        let budget = self.options().sample_chars;
        let bindings = Bindings::new()
            .set("df_subset_right", sample_block(right, budget))
            .set("df_subset_wrong", sample_block(missed, budget))
            .set("correct_category", correct.name())
            .set("wrong_category", wrong.name());
        let id = match template {
            AdaptTemplate::InterClass => TemplateId::InterClassAdapt,
            AdaptTemplate::IntraClass => TemplateId::IntraClassDiff,
        };
        let request = self.templates().render(id, &bindings)?;
        let event = LogEvent::new(Stage::Adapt, iteration)
            .category(correct.name())
            .pair(correct.name(), wrong.name());
        let reply = self.complete_parsed(event.clone(), &request, extract_descriptor)?;
        let descriptor = self.keep_name(correct.name(), reply, event);

        let mut out = taxonomy.clone();
        out.upsert(descriptor, Stage::Adapt, iteration);
        Ok(out)
    }

    fn adapt_mined(
        &self,
        taxonomy: &mut Taxonomy,
        outcome: &ValidationOutcome,
        config: &RefinementConfig,
        iteration: u32,
    ) -> Result<Vec<ConfusionPair>> {
        let pairs = mine_confusion_pairs(&outcome.matrix, config.min_confusion_count, config.top_k_pairs);
        for p in &pairs {
            *taxonomy = self.adapt_at(p, outcome, taxonomy, config.adapt_template, iteration)?;
        }
        Ok(pairs)
    }

    /// Validate, then rewrite failing categories and adapt confused pairs,
    /// until every validated category reaches the threshold or
    /// `max_iterations` rounds of rewriting have run. A final validation
    /// follows the last round, so the stop reason always reflects the
    /// returned taxonomy.
    pub fn refine_loop(
        &self,
        taxonomy: &Taxonomy,
        validation_docs: &[Document],
        config: &RefinementConfig,
    ) -> std::result::Result<(Taxonomy, RefinementReport), RefineFailure> {
        let mut current = taxonomy.clone();
        let mut records = Vec::new();
        match self.run_loop(&mut current, validation_docs, config, &mut records) {
            Ok((stop_reason, iterations_run)) => Ok((
                current,
                RefinementReport {
                    iterations_run,
                    per_iteration: records,
                    stop_reason,
                },
            )),
            Err(error) => Err(RefineFailure {
                error,
                taxonomy: current,
                completed: records,
            }),
        }
    }

    fn run_loop(
        &self,
        taxonomy: &mut Taxonomy,
        docs: &[Document],
        config: &RefinementConfig,
        records: &mut Vec<IterationRecord>,
    ) -> Result<(StopReason, u32)> {
        config.validate()?;
        if taxonomy.len() < 2 {
            return Err(Error::Precondition("refinement needs at least two categories".into()));
        }
        if docs.is_empty() {
            return Err(Error::Precondition("refinement needs validation documents".into()));
        }
        let pool = config.fresh_validation_samples.then(|| group_by_label(docs));
        let threshold = config.accuracy_threshold;
        let mut rounds = 0u32;

        let (mut stop, outcome) = loop {
            let iteration = rounds + 1;
            let round_docs = match &pool {
                Some(groups) => resample(groups, config, rounds)?,
                None => docs.to_vec(),
            };
            let outcome = self.validate_at(taxonomy, &round_docs, iteration)?;
            let min_accuracy = outcome.min_accuracy();
            records.push(IterationRecord {
                iteration,
                accuracy: outcome.per_category_accuracy.clone(),
                min_accuracy,
                refined: Vec::new(),
                adapted: Vec::new(),
            });
            if min_accuracy >= threshold {
                break (StopReason::ThresholdMet, outcome);
            }
            if rounds == config.max_iterations {
                break (StopReason::MaxIterations, outcome);
            }
            rounds += 1;

            let failing: Vec<String> = taxonomy
                .names()
                .into_iter()
                .filter(|n| outcome.per_category_accuracy.get(n).is_some_and(|a| *a < threshold))
                .collect();
            for name in failing {
                let category = taxonomy.get(&name).expect("name taken from taxonomy");
                let right = outcome.correct.get(&name).map_or(&[][..], Vec::as_slice);
                let wrong = outcome.misclassified.get(&name).map_or(&[][..], Vec::as_slice);
                let descriptor = self.refine_at(category, right, wrong, iteration)?;
                taxonomy.upsert(descriptor, Stage::Refine, iteration);
                records.last_mut().expect("pushed above").refined.push(name);
            }
            if !config.adapt_after_loop {
                let adapted = self.adapt_mined(taxonomy, &outcome, config, iteration)?;
                records.last_mut().expect("pushed above").adapted = adapted;
            }
        };

        if config.adapt_after_loop {
            let iteration = records.len() as u32;
            let adapted = self.adapt_mined(taxonomy, &outcome, config, iteration)?;
            if !adapted.is_empty() {
                records.last_mut().expect("at least one validation").adapted = adapted;
                let round_docs = match &pool {
                    Some(groups) => resample(groups, config, rounds + 1)?,
                    None => docs.to_vec(),
                };
                let outcome = self.validate_at(taxonomy, &round_docs, iteration + 1)?;
                let min_accuracy = outcome.min_accuracy();
                records.push(IterationRecord {
                    iteration: iteration + 1,
                    accuracy: outcome.per_category_accuracy.clone(),
                    min_accuracy,
                    refined: Vec::new(),
                    adapted: Vec::new(),
                });
                stop = if min_accuracy >= threshold {
                    StopReason::ThresholdMet
                } else {
                    StopReason::MaxIterations
                };
            }
        }
        Ok((stop, rounds))
    }
}

fn group_by_label(docs: &[Document]) -> Vec<(String, Vec<Document>)> {
    let mut groups: Vec<(String, Vec<Document>)> = Vec::new();
    for d in docs {
        let label = d.gold_label.clone().unwrap_or_default();
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(d.clone()),
            None => groups.push((label, vec![d.clone()])),
        }
    }
    groups
}

fn resample(groups: &[(String, Vec<Document>)], config: &RefinementConfig, round: u32) -> Result<Vec<Document>> {
    let plan = SamplePlan::new(
        SamplingStrategy::SeededRandom,
        config.m_validate,
        config.seed.wrapping_add(round as u64),
    )?;
    let mut out = Vec::new();
    for (_, docs) in groups {
        out.extend(sample_bootstrap(docs, &plan)?);
    }
    Ok(out)
}
