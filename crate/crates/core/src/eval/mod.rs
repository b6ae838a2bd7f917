//! Datasets, seen/unseen experiment protocol and reports.

mod dataset;
mod experiment;
mod split;
mod synthetic;

pub use dataset::{
    load_agnews, load_dbpedia, load_generic_csv, write_generic_csv, DatasetKind, AGNEWS_LABELS, DBPEDIA_LABELS,
};
pub use experiment::{
    evaluate, run_experiment, run_on_documents, sweep, EvalReport, ExperimentOutcome, ExperimentReport, Phase,
    Prediction, SweepPoint, UNCLASSIFIED,
};
pub use split::{split_seen_unseen, ExperimentPlan, Splits};
pub use synthetic::{synthetic_corpus, SyntheticSpec, SYNTHETIC_CLASSES};
