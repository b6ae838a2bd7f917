use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split::{split_seen_unseen, ExperimentPlan};
use crate::describe::SamplePlan;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::hitl::TopicOptions;
use crate::model::{save_taxonomy, ConfusionMatrix, Document, RefinementConfig, Taxonomy, TopicDescriptor};
use crate::refine::RefinementReport;

/// Predicted label recorded for documents whose classification failed.
pub const UNCLASSIFIED: &str = "(unclassified)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    SeenOnly,
    AfterUnseen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub phase: Phase,
    pub document_id: String,
    pub gold: String,
    pub predicted: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub phase: Phase,
    pub documents: u64,
    pub failures: u64,
    pub overall_accuracy: f64,
    pub per_class_accuracy: BTreeMap<String, f64>,
    pub matrix: ConfusionMatrix,
    /// Written separately as JSON lines.
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    /// Tallies `predictions`; labels are dataset labels on both axes.
    pub fn from_predictions(phase: Phase, predictions: Vec<Prediction>) -> Self {
        let mut matrix = ConfusionMatrix::new();
        for p in &predictions {
            matrix.record(&p.gold, &p.predicted);
        }
        let mut per_class_accuracy = BTreeMap::new();
        for p in &predictions {
            if !per_class_accuracy.contains_key(&p.gold) {
                let a = matrix.accuracy_of(&p.gold).expect("row has entries");
                per_class_accuracy.insert(p.gold.clone(), a);
            }
        }
        EvalReport {
            phase,
            documents: predictions.len() as u64,
            failures: predictions.iter().filter(|p| p.error.is_some()).count() as u64,
            overall_accuracy: matrix.accuracy().unwrap_or(0.0),
            per_class_accuracy,
            matrix,
            predictions,
        }
    }

    /// Accuracy over the documents whose gold label is in `labels`.
    pub fn accuracy_over(&self, labels: &[String]) -> Option<f64> {
        let total: u64 = labels.iter().map(|l| self.matrix.row_total(l)).sum();
        let correct: u64 = labels.iter().map(|l| self.matrix.count(l, l)).sum();
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

/// Classifies `docs` and scores predictions by dataset label.
pub fn evaluate(engine: &Engine, taxonomy: &Taxonomy, docs: &[Document], phase: Phase) -> EvalReport {
    let predictions = docs
        .iter()
        .zip(engine.classify_batch(docs, taxonomy))
        .map(|(doc, result)| {
            let gold = doc.gold_label.clone().unwrap_or_default();
            let (predicted, error) = match result {
                Ok(r) => {
                    let label = taxonomy.get(&r.predicted).map_or(r.predicted.clone(), |c| c.label().to_string());
                    (label, None)
                }
                Err(e) => (UNCLASSIFIED.to_string(), Some(e.to_string())),
            };
            Prediction {
                phase,
                document_id: doc.id.clone(),
                gold,
                predicted,
                error,
            }
        })
        .collect();
    EvalReport::from_predictions(phase, predictions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub config: RefinementConfig,
    pub model: String,
    pub template_fingerprint: String,
    /// SHA-256 over plan, config, model and templates.
    pub config_hash: String,
    pub phase1: EvalReport,
    pub phase2: EvalReport,
    /// Phase-2 accuracy restricted to seen-class documents.
    pub seen_accuracy_after_unseen: f64,
    /// `seen_accuracy_after_unseen - phase1.overall_accuracy`.
    pub accuracy_shift: f64,
    pub unseen_accuracy: Option<f64>,
    pub refinement: RefinementReport,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub seen_taxonomy: Taxonomy,
    pub final_taxonomy: Taxonomy,
}

impl ExperimentOutcome {
    /// Writes `report.json`, `predictions.jsonl`, `taxonomy_seen.json` and
    /// `taxonomy_final.json` into `dir`.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write("report.json", self.report.to_json())?;
        let mut lines = String::new();
        for p in self.report.phase1.predictions.iter().chain(&self.report.phase2.predictions) {
            lines.push_str(&serde_json::to_string(p).expect("prediction serializes"));
            lines.push('\n');
        }
        write("predictions.jsonl", lines)?;
        save_taxonomy(&self.seen_taxonomy, dir.join("taxonomy_seen.json"))?;
        save_taxonomy(&self.final_taxonomy, dir.join("taxonomy_final.json"))
    }
}

fn config_hash(plan: &ExperimentPlan, config: &RefinementConfig, model: &str, templates: &str) -> String {
    use sha2::{Digest, Sha256};
    let body = serde_json::to_string(&(plan, config, model, templates)).expect("plan serializes");
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Loads the plan's dataset and runs [`run_on_documents`].
pub fn run_experiment(
    engine: &Engine,
    plan: &ExperimentPlan,
    config: &RefinementConfig,
    partial_dir: Option<&Path>,
) -> Result<ExperimentOutcome> {
    let docs = plan.dataset.load(&plan.path)?;
    run_on_documents(engine, plan, config, &docs, partial_dir)
}

/// Phase 1: bootstrap, contrast and refine the seen classes, then test on
/// them. Phase 2: add every unseen class as a user topic and test on seen
/// and unseen documents together.
///
/// The plan's split sizes override `n_bootstrap` and `m_validate` in
/// `config`. If refinement fails, its partial taxonomy is saved to
/// `partial_dir` when one is given.
pub fn run_on_documents(
    engine: &Engine,
    plan: &ExperimentPlan,
    config: &RefinementConfig,
    docs: &[Document],
    partial_dir: Option<&Path>,
) -> Result<ExperimentOutcome> {
    let config = RefinementConfig {
        n_bootstrap: plan.n_bootstrap,
        m_validate: plan.m_validate,
        ..config.clone()
    };
    config.validate()?;
    let splits = split_seen_unseen(docs, plan)?;

    let taxonomy = engine.bootstrap_taxonomy(&splits.seen_train, &SamplePlan::from_config(&config)?)?;
    let taxonomy = engine.contrast_taxonomy(&taxonomy)?;
    let (seen_taxonomy, refinement) = match engine.refine_loop(&taxonomy, &splits.seen_validate, &config) {
        Ok(done) => done,
        Err(failure) => {
            if let Some(dir) = partial_dir {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                save_taxonomy(&failure.taxonomy, dir.join("taxonomy_partial.json"))?;
            }
            return Err(failure.error);
        }
    };
    let phase1 = evaluate(engine, &seen_taxonomy, &splits.seen_test, Phase::SeenOnly);

    let mut final_taxonomy = seen_taxonomy.clone();
    for (label, exemplars) in &splits.unseen_bootstrap {
        let user = TopicDescriptor::new(label, &plan.description_for(label))?;
        let options = TopicOptions {
            run_contrast: true,
            sample_docs: exemplars.clone(),
        };
        final_taxonomy = engine.add_topic(&user, &final_taxonomy, &options)?;
        final_taxonomy.set_source_label(user.name(), label)?;
    }
    let mut test = splits.seen_test.clone();
    test.extend(splits.unseen_test.iter().cloned());
    let phase2 = evaluate(engine, &final_taxonomy, &test, Phase::AfterUnseen);

    let seen_accuracy_after_unseen = phase2.accuracy_over(&plan.seen_labels).unwrap_or(0.0);
    let unseen_accuracy = phase2.accuracy_over(&plan.unseen_labels);
    let model = engine.backend().capabilities().model_id;
    let template_fingerprint = engine.templates().fingerprint();
    let report = ExperimentReport {
        config_hash: config_hash(plan, &config, &model, &template_fingerprint),
        plan: plan.clone(),
        config,
        model,
        template_fingerprint,
        accuracy_shift: seen_accuracy_after_unseen - phase1.overall_accuracy,
        seen_accuracy_after_unseen,
        unseen_accuracy,
        phase1,
        phase2,
        refinement,
    };
    Ok(ExperimentOutcome {
        report,
        seen_taxonomy,
        final_taxonomy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_bootstrap: usize,
    pub m_validate: usize,
    pub phase1_accuracy: f64,
    pub seen_accuracy_after_unseen: f64,
    pub unseen_accuracy: Option<f64>,
    pub accuracy_shift: f64,
    pub iterations_run: u32,
}

/// Runs the experiment for every `(n, m)` combination, in row-major order.
pub fn sweep(
    engine: &Engine,
    plan: &ExperimentPlan,
    config: &RefinementConfig,
    docs: &[Document],
    n_values: &[usize],
    m_values: &[usize],
) -> Result<Vec<SweepPoint>> {
    let grid: Vec<(usize, usize)> = n_values
        .iter()
        .flat_map(|&n| m_values.iter().map(move |&m| (n, m)))
        .collect();
    engine
        .map(&grid, |&(n, m)| {
            let plan = ExperimentPlan {
                n_bootstrap: n,
                m_validate: m,
                ..plan.clone()
            };
            let r = run_on_documents(engine, &plan, config, docs, None)?.report;
            Ok(SweepPoint {
                n_bootstrap: n,
                m_validate: m,
                phase1_accuracy: r.phase1.overall_accuracy,
                seen_accuracy_after_unseen: r.seen_accuracy_after_unseen,
                unseen_accuracy: r.unseen_accuracy,
                accuracy_shift: r.accuracy_shift,
                iterations_run: r.refinement.iterations_run,
            })
        })
        .into_iter()
        .collect()
}
