mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use common::{FixedScores, ScriptedBackend};
use proptest::prelude::*;
use tagforge::describe::SamplePlan;
use tagforge::eval::{synthetic_corpus, SyntheticSpec};
use tagforge::hitl::TopicOptions;
use tagforge::llm::{MockBackend, PromptRequest};
use tagforge::model::{Document, SamplingStrategy, Stage, Taxonomy, TopicDescriptor};
use tagforge::{Engine, EngineOptions, Error, Execution, RunLog, REPAIR_INSTRUCTION};

fn mock() -> Engine {
    Engine::new(Arc::new(MockBackend::new()))
}

fn replying(reply: impl Fn(&PromptRequest) -> String + Send + Sync + 'static) -> Engine {
    let backend = ScriptedBackend::new(&common::class_names(1), 1, vec![vec![1.0]]).with_reply(Box::new(reply));
    Engine::new(Arc::new(backend))
}

fn taxonomy(entries: &[(&str, &str)]) -> Taxonomy {
    let mut t = Taxonomy::new();
    for (n, d) in entries {
        t.upsert(TopicDescriptor::new(n, d).unwrap(), Stage::Bootstrap, 0);
    }
    t
}

fn by_class(docs: &[Document]) -> Vec<(String, Vec<Document>)> {
    let mut out: Vec<(String, Vec<Document>)> = Vec::new();
    for d in docs {
        let l = d.gold_label.clone().unwrap();
        match out.iter_mut().find(|(k, _)| *k == l) {
            Some((_, v)) => v.push(d.clone()),
            None => out.push((l, vec![d.clone()])),
        }
    }
    out
}

#[test]
fn bootstrap_is_deterministic_and_labelled() {
    let docs = synthetic_corpus(&SyntheticSpec {
        docs_per_class: 30,
        ..SyntheticSpec::default()
    });
    let classes = by_class(&docs);
    let plan = SamplePlan::new(SamplingStrategy::SeededRandom, 20, 5).unwrap();
    let a = mock().bootstrap_taxonomy(&classes, &plan).unwrap();
    let b = mock().with_execution(Execution::Sequential).bootstrap_taxonomy(&classes, &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    let labels: Vec<_> = a.categories().iter().map(|c| c.source_label().unwrap()).collect();
    assert_eq!(labels, ["World", "Sports", "Business", "Sci/Tech"]);
}

#[test]
fn bootstrap_name_collisions_get_label_suffix() {
    let engine = replying(|_| r#"{"topic_name": "Same", "topic_description": "d"}"#.to_string());
    let classes = vec![
        ("A".to_string(), vec![Document::new("1", "x")]),
        ("B".to_string(), vec![Document::new("2", "y")]),
    ];
    let plan = SamplePlan::new(SamplingStrategy::FirstN, 5, 0).unwrap();
    let t = engine.bootstrap_taxonomy(&classes, &plan).unwrap();
    assert_eq!(t.names(), ["Same", "Same_B"]);
    assert_eq!(t.resolve_label("B").unwrap().name(), "Same_B");
}

#[test]
fn prose_replies_are_reprompted_then_fail() {
    let prompts = Arc::new(Mutex::new(Vec::new()));
    let seen = prompts.clone();
    let engine = replying(move |r| {
        seen.lock().unwrap().push(r.user_text.clone());
        "Sure! Here is a tag for you.".to_string()
    });
    let err = engine.bootstrap_category(&[Document::new("1", "login failed")]).unwrap_err();
    assert!(matches!(err, Error::ParseFailure(_)));
    let prompts = prompts.lock().unwrap();
    assert_eq!(prompts.len(), 3);
    assert!(!prompts[0].contains(REPAIR_INSTRUCTION));
    assert!(prompts[1].ends_with(REPAIR_INSTRUCTION));
}

#[test]
fn reprompt_can_recover() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let engine = replying(move |_| {
        if c.fetch_add(1, Ordering::SeqCst) == 0 {
            "thinking...".into()
        } else {
            r#"{"topic_name": "Login", "topic_description": "Sign-in trouble."}"#.into()
        }
    });
    let d = engine.bootstrap_category(&[Document::new("1", "x")]).unwrap();
    assert_eq!(d.name(), "Login");
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn contrast_rewrites_every_category_in_place() {
    let t = taxonomy(&[("Login", "password"), ("Network", "vpn"), ("Hardware", "token")]);
    let out = mock().contrast_taxonomy(&t).unwrap();
    assert_eq!(out.names(), t.names());
    for c in out.categories() {
        assert_eq!(c.history().len(), 2);
        assert_eq!(c.history()[1].stage, Stage::Contrast);
        assert!(c.description().contains("different from other classes"));
    }
}

#[test]
fn contrast_ignores_unknown_names_and_keeps_the_rest() {
    let log = RunLog::in_memory();
    let engine = replying(|_| {
        r#"{"topic_name": " login ", "topic_description": "new login"}
           {"topic_name": "Billing", "topic_description": "invented"}"#
            .to_string()
    })
    .with_log(log.clone());
    let t = taxonomy(&[("Login", "password"), ("Network", "vpn")]);
    let out = engine.contrast_taxonomy(&t).unwrap();
    assert_eq!(out.names(), ["Login", "Network"]);
    assert_eq!(out.get("Login").unwrap().description(), "new login");
    assert_eq!(out.get("Network").unwrap().history().len(), 1);
    assert!(log.lines().iter().any(|l| l.contains("Billing") && l.contains("\"ok\":false")));
}

#[test]
fn contrast_matching_nothing_is_surfaced() {
    let engine = replying(|_| r#"{"topic_name": "Other", "topic_description": "x"}"#.to_string());
    let t = taxonomy(&[("Login", "password"), ("Network", "vpn")]);
    assert!(matches!(engine.contrast_taxonomy(&t), Err(Error::ContrastDroppedAll)));
    let single = taxonomy(&[("Login", "password")]);
    assert!(matches!(mock().contrast_taxonomy(&single), Err(Error::Precondition(_))));
}

#[test]
fn large_taxonomies_are_contrasted_in_batches() {
    let prompts = Arc::new(Mutex::new(Vec::new()));
    let seen = prompts.clone();
    let inner = MockBackend::new();
    let engine = replying(move |r| {
        seen.lock().unwrap().push(r.user_text.clone());
        tagforge::llm::LlmBackend::complete(&inner, r).unwrap()
    });
    let entries: Vec<(String, String)> = (0..15).map(|i| (format!("Cat{i}"), format!("topic {i}"))).collect();
    let refs: Vec<(&str, &str)> = entries.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let t = taxonomy(&refs);
    let out = engine.contrast_taxonomy(&t).unwrap();
    assert_eq!(out.names(), t.names());
    assert!(out.categories().iter().all(|c| c.history().len() == 2));
    let prompts = prompts.lock().unwrap();
    assert_eq!(prompts.len(), 2);
    assert!(prompts.iter().all(|p| p.contains("Cat14") && p.contains("Cat0")));
}

#[test]
fn batch_equals_serial_under_both_executions() {
    let docs = synthetic_corpus(&SyntheticSpec {
        docs_per_class: 25,
        ..SyntheticSpec::default()
    });
    let classes = by_class(&docs);
    let plan = SamplePlan::new(SamplingStrategy::FirstN, 10, 0).unwrap();
    let t = mock().bootstrap_taxonomy(&classes, &plan).unwrap();
    let seq = mock().with_execution(Execution::Sequential);
    let par = mock().with_options(EngineOptions {
        execution: Execution::Parallel,
        concurrency_cap: 8,
        ..EngineOptions::default()
    });
    let a: Vec<_> = seq.classify_batch(&docs, &t).into_iter().map(Result::unwrap).collect();
    let b: Vec<_> = par.classify_batch(&docs, &t).into_iter().map(Result::unwrap).collect();
    assert_eq!(a, b);
    for (d, r) in docs.iter().zip(&a).step_by(17) {
        assert_eq!(&seq.classify(d, &t).unwrap(), r);
    }
}

#[test]
fn run_log_records_prompts() {
    let log = RunLog::in_memory();
    let engine = mock().with_log(log.clone());
    let t = taxonomy(&[("Login", "password"), ("Network", "vpn")]);
    engine.contrast_taxonomy(&t).unwrap();
    let lines = log.lines();
    assert!(!lines.is_empty());
    for l in &lines {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["stage"], "contrast");
        assert!(v["ts"].is_u64());
    }
    assert!(lines.iter().any(|l| l.contains("prompt_sha256\":\"")));
}

fn arb_taxonomy() -> impl Strategy<Value = Taxonomy> {
    prop::collection::btree_set("[A-Z][a-z]{2,8}", 1..6).prop_map(|names| {
        let mut t = Taxonomy::new();
        for n in names {
            t.upsert(TopicDescriptor::new(&n, &format!("about {n}")).unwrap(), Stage::Bootstrap, 0);
        }
        t
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_topic_without_contrast_only_appends(t in arb_taxonomy(), desc in "[a-z ]{1,40}[a-z]") {
        let user = TopicDescriptor::new("Zz_New_Topic", &desc).unwrap();
        let out = mock().add_topic(&user, &t, &TopicOptions { run_contrast: false, ..TopicOptions::default() }).unwrap();
        prop_assert_eq!(out.len(), t.len() + 1);
        prop_assert_eq!(&out.categories()[..t.len()], t.categories());
        prop_assert_eq!(out.categories()[t.len()].name(), "Zz_New_Topic");
    }

    #[test]
    fn winner_is_earliest_maximum_under_permutation(
        scores in prop::collection::vec(-3i32..3, 2..10),
        rotate in 0usize..10,
    ) {
        let backend = Arc::new(FixedScores::new());
        let engine = Engine::new(backend.clone());
        let n = scores.len();
        let names: Vec<String> = (0..n).map(|i| format!("K{i}")).collect();
        let order: Vec<usize> = (0..n).map(|i| (i + rotate) % n).collect();
        let t = taxonomy(&order.iter().map(|&i| (names[i].as_str(), "d")).collect::<Vec<_>>());
        backend.set(order.iter().map(|&i| scores[i] as f64).collect());
        let got = engine.classify(&Document::new("d", "text"), &t).unwrap().predicted;

        let max = *scores.iter().max().unwrap();
        let first_in_order = order.iter().find(|&&i| scores[i] == max).unwrap();
        prop_assert_eq!(&got, &names[*first_in_order]);
        if scores.iter().filter(|&&s| s == max).count() == 1 {
            let unique = scores.iter().position(|&s| s == max).unwrap();
            prop_assert_eq!(&got, &names[unique]);
        }
    }

    #[test]
    fn taxonomy_file_round_trip(t in arb_taxonomy()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        tagforge::model::save_taxonomy(&t, &p).unwrap();
        prop_assert_eq!(tagforge::model::load_taxonomy(&p).unwrap(), t);
    }
}
